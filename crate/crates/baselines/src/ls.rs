use ckm_grid::{pad_observation, DegradationKind, Observation};
use ndarray::Array2;

use crate::{BaselineError, Result};

/// Least-squares reconstruction x_hat = A^T (A A^T)^{-1} y.
///
/// All three observable operators have closed forms: A = I gives y back, a
/// row selector has orthonormal rows so the pseudo-inverse is A^T, and the
/// block-averaging operator broadcasts each block mean over its block.
pub fn ls_reconstruct(obs: &Observation) -> Result<Array2<f64>> {
    let (l, w) = obs.source_shape;
    match &obs.spec.kind {
        DegradationKind::Denoise | DegradationKind::Inpaint(_) => Ok(pad_observation(obs)?),
        DegradationKind::SuperRes(m) => {
            let (lp, wp) = (l / m, w / m);
            if obs.values.len() != lp * wp {
                return Err(BaselineError::Precondition(format!(
                    "SuperRes observation length {} != {}",
                    obs.values.len(),
                    lp * wp
                )));
            }
            let mut out = Array2::zeros((l, w));
            for (i, &v) in obs.values.iter().enumerate() {
                let (br, bc) = (i / wp, i % wp);
                for r in 0..*m {
                    for c in 0..*m {
                        out[(br * m + r, bc * m + c)] = v;
                    }
                }
            }
            Ok(out)
        }
        DegradationKind::Generate => Err(BaselineError::Singular {
            condition: f64::INFINITY,
            context: "A = 0 has no right inverse; nothing to reconstruct from".into(),
        }),
    }
}
