use ckm_grid::{DegradationKind, Observation};

use crate::{BaselineError, Result};

/// One observed sample in continuous grid coordinates (SuperRes samples sit
/// at block centers, which fall between cells for even factors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedPoint {
    pub row: f64,
    pub col: f64,
    pub value: f64,
}

impl ObservedPoint {
    pub fn dist(&self, row: f64, col: f64) -> f64 {
        let dr = self.row - row;
        let dc = self.col - col;
        (dr * dr + dc * dc).sqrt()
    }
}

/// Flattens an observation into scattered samples for point interpolators.
pub fn observed_points(obs: &Observation) -> Result<Vec<ObservedPoint>> {
    let (_l, w) = obs.source_shape;
    let pts = match &obs.spec.kind {
        DegradationKind::Denoise => obs
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| ObservedPoint {
                row: (i / w) as f64,
                col: (i % w) as f64,
                value: v,
            })
            .collect(),
        DegradationKind::Inpaint(mask) => {
            let mut it = obs.values.iter();
            let mut pts = Vec::with_capacity(obs.values.len());
            for ((r, c), &observed) in mask.indexed_iter() {
                if observed {
                    let &v = it.next().ok_or_else(|| {
                        BaselineError::Precondition("observation shorter than mask".into())
                    })?;
                    pts.push(ObservedPoint {
                        row: r as f64,
                        col: c as f64,
                        value: v,
                    });
                }
            }
            pts
        }
        DegradationKind::SuperRes(m) => {
            let wp = w / m;
            let half = (*m as f64 - 1.0) / 2.0;
            obs.values
                .iter()
                .enumerate()
                .map(|(i, &v)| ObservedPoint {
                    row: (i / wp * m) as f64 + half,
                    col: (i % wp * m) as f64 + half,
                    value: v,
                })
                .collect()
        }
        DegradationKind::Generate => Vec::new(),
    };
    if pts.is_empty() {
        return Err(BaselineError::EmptyObservation(
            "no observed samples to interpolate from".into(),
        ));
    }
    Ok(pts)
}
