use ckm_grid::{DegradationKind, Observation};
use ndarray::Array2;

use crate::kriging::kriging_reconstruct;
use crate::points::{observed_points, ObservedPoint};
use crate::variogram::Variogram;
use crate::{BaselineError, Result};

/// Observed cells coinciding with a target within this distance are copied
/// through unchanged (exact-interpolator shortcut for KNN/IDW/Kriging).
pub(crate) const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum InterpolatorConfig {
    /// Equal-weight average of the K nearest observations.
    Knn { k: usize },
    /// Four-neighbor blend on a regular low-resolution grid (SuperRes only).
    Bilinear,
    /// Cubic convolution kernel, a = -0.5, edge-clamped (SuperRes only).
    Bicubic,
    /// Inverse-distance weights ||q_i - q_j||^(-p), normalized to sum 1.
    Idw { power: f64 },
    /// Ordinary Kriging under the given variogram, k = 16 local neighborhood.
    Kriging(Variogram),
}

pub fn interpolate(obs: &Observation, cfg: &InterpolatorConfig) -> Result<Array2<f64>> {
    match cfg {
        InterpolatorConfig::Knn { k } => {
            if *k < 1 {
                return Err(BaselineError::Precondition("KNN needs K >= 1".into()));
            }
            scattered(obs, |pts, r, c| knn_predict(pts, r, c, *k))
        }
        InterpolatorConfig::Idw { power } => {
            if !(*power > 0.0) {
                return Err(BaselineError::Precondition("IDW needs p > 0".into()));
            }
            scattered(obs, |pts, r, c| idw_predict(pts, r, c, *power))
        }
        InterpolatorConfig::Bilinear => regular_grid(obs, false),
        InterpolatorConfig::Bicubic => regular_grid(obs, true),
        InterpolatorConfig::Kriging(vg) => Ok(kriging_reconstruct(obs, vg)?.pixels),
    }
}

fn scattered(
    obs: &Observation,
    predict: impl Fn(&[ObservedPoint], f64, f64) -> f64,
) -> Result<Array2<f64>> {
    let pts = observed_points(obs)?;
    let (l, w) = obs.source_shape;
    let mut out = Array2::zeros((l, w));
    for r in 0..l {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            out[(r, c)] = match coincident(&pts, rf, cf) {
                Some(v) => v,
                None => predict(&pts, rf, cf),
            };
        }
    }
    Ok(out)
}

pub(crate) fn coincident(pts: &[ObservedPoint], r: f64, c: f64) -> Option<f64> {
    pts.iter()
        .find(|p| p.dist(r, c) < COINCIDENT_EPS)
        .map(|p| p.value)
}

/// Indices of the k nearest points; distance ties break by point order,
/// which is row-major for grid-sampled observations.
pub(crate) fn nearest_indices(pts: &[ObservedPoint], r: f64, c: f64, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    let key = |i: usize| (pts[i].dist(r, c), i);
    let k = k.min(pts.len());
    if k < pts.len() {
        order.select_nth_unstable_by(k - 1, |&a, &b| key(a).partial_cmp(&key(b)).unwrap());
        order.truncate(k);
    }
    order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap());
    order
}

fn knn_predict(pts: &[ObservedPoint], r: f64, c: f64, k: usize) -> f64 {
    let idx = nearest_indices(pts, r, c, k);
    idx.iter().map(|&i| pts[i].value).sum::<f64>() / idx.len() as f64
}

fn idw_predict(pts: &[ObservedPoint], r: f64, c: f64, power: f64) -> f64 {
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for p in pts {
        let w = p.dist(r, c).powf(-power);
        wsum += w;
        acc += w * p.value;
    }
    acc / wsum
}

fn cubic_kernel(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t.powi(3) - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t.powi(3) - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Upsamples the SuperRes block-mean grid; samples live at block centers.
fn regular_grid(obs: &Observation, cubic: bool) -> Result<Array2<f64>> {
    let m = match obs.spec.kind {
        DegradationKind::SuperRes(m) => m,
        _ => {
            return Err(BaselineError::Precondition(
                "bilinear/bicubic need a regular low-resolution (SuperRes) observation".into(),
            ))
        }
    };
    let (l, w) = obs.source_shape;
    let (lp, wp) = (l / m, w / m);
    if obs.values.is_empty() {
        return Err(BaselineError::EmptyObservation("no low-res samples".into()));
    }
    let half = (m as f64 - 1.0) / 2.0;
    let mut out = Array2::zeros((l, w));
    for r in 0..l {
        for c in 0..w {
            // continuous low-res coordinates of this full-res cell
            let gr = ((r as f64 - half) / m as f64).clamp(0.0, (lp - 1).max(0) as f64);
            let gc = ((c as f64 - half) / m as f64).clamp(0.0, (wp - 1).max(0) as f64);
            out[(r, c)] = interp_at(&obs.values, lp, wp, gr, gc, cubic);
        }
    }
    Ok(out)
}

/// Bilinear or bicubic evaluation at continuous low-resolution coordinates.
pub(crate) fn interp_at(
    values: &[f64],
    lp: usize,
    wp: usize,
    gr: f64,
    gc: f64,
    cubic: bool,
) -> f64 {
    let sample = |i: i64, j: i64| -> f64 {
        let i = i.clamp(0, lp as i64 - 1) as usize;
        let j = j.clamp(0, wp as i64 - 1) as usize;
        values[i * wp + j]
    };
    let (i0, j0) = (gr.floor() as i64, gc.floor() as i64);
    let (fr, fc) = (gr - i0 as f64, gc - j0 as f64);
    if cubic {
        let mut acc = 0.0;
        for di in -1..=2i64 {
            let wr = cubic_kernel(fr - di as f64);
            for dj in -1..=2i64 {
                acc += wr * cubic_kernel(fc - dj as f64) * sample(i0 + di, j0 + dj);
            }
        }
        acc
    } else {
        (1.0 - fr) * (1.0 - fc) * sample(i0, j0)
            + (1.0 - fr) * fc * sample(i0, j0 + 1)
            + fr * (1.0 - fc) * sample(i0 + 1, j0)
            + fr * fc * sample(i0 + 1, j0 + 1)
    }
}
