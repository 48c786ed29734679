use ckm_grid::Observation;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::interp::{coincident, nearest_indices};
use crate::points::{observed_points, ObservedPoint};
use crate::variogram::Variogram;
use crate::{BaselineError, Result};

/// Local neighborhood size: each cell solves a (k+1)-dim system at most.
pub const KRIGING_NEIGHBORS: usize = 16;

#[derive(Debug, Clone)]
pub struct KrigingOutput {
    pub pixels: Array2<f64>,
    /// Cells whose Kriging system was singular and fell back to IDW.
    pub fallback_cells: usize,
}

/// Ordinary Kriging: per cell, solve for weights over the k nearest
/// observations with a Lagrange multiplier enforcing sum(w) = 1, then apply
/// them as a weighted average.
pub fn kriging_reconstruct(obs: &Observation, vg: &Variogram) -> Result<KrigingOutput> {
    let pts = observed_points(obs)?;
    if pts.len() < 2 {
        return Err(BaselineError::Precondition(
            "Kriging needs at least 2 observed points".into(),
        ));
    }
    let (l, w) = obs.source_shape;
    let mut out = Array2::zeros((l, w));
    let mut fallbacks = 0usize;
    for r in 0..l {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            if let Some(v) = coincident(&pts, rf, cf) {
                out[(r, c)] = v; // exact interpolator at observed cells
                continue;
            }
            let hood = nearest_indices(&pts, rf, cf, KRIGING_NEIGHBORS);
            match solve_weights(&pts, &hood, rf, cf, vg) {
                Some(weights) => {
                    out[(r, c)] = hood
                        .iter()
                        .zip(&weights)
                        .map(|(&i, &wt)| wt * pts[i].value)
                        .sum();
                }
                None => {
                    fallbacks += 1;
                    out[(r, c)] = idw_fallback(&pts, &hood, rf, cf);
                }
            }
        }
    }
    Ok(KrigingOutput {
        pixels: out,
        fallback_cells: fallbacks,
    })
}

/// Weights for one target; `None` when the augmented system is singular.
pub(crate) fn solve_weights(
    pts: &[ObservedPoint],
    hood: &[usize],
    r: f64,
    c: f64,
    vg: &Variogram,
) -> Option<Vec<f64>> {
    let k = hood.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &ia) in hood.iter().enumerate() {
        for (b, &ib) in hood.iter().enumerate() {
            m[(a, b)] = vg.semivariance(pts[ia].dist(pts[ib].row, pts[ib].col));
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
        rhs[a] = vg.semivariance(pts[ia].dist(r, c));
    }
    rhs[k] = 1.0;
    let sol = m.lu().solve(&rhs)?;
    let weights: Vec<f64> = sol.iter().take(k).copied().collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return None;
    }
    Some(weights)
}

fn idw_fallback(pts: &[ObservedPoint], hood: &[usize], r: f64, c: f64) -> f64 {
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for &i in hood {
        let w = pts[i].dist(r, c).powi(2).recip();
        wsum += w;
        acc += w * pts[i].value;
    }
    acc / wsum
}

#[cfg(test)]
mod tests {
    use super::*;
    use ckm_grid::{apply_degradation, CkmGrid, DegradationKind, DegradationSpec, ValueMap};
    use ckm_envgen::shadow_field;
    use crate::interp::{interpolate, InterpolatorConfig};
    use crate::variogram::fit_variogram;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn inpaint_obs(px: Array2<f64>, mask: Array2<bool>) -> Observation {
        let g = CkmGrid::from_pixels(px, ValueMap::CKM_IMAGE_NET, None).unwrap();
        let spec = DegradationSpec::new(DegradationKind::Inpaint(mask), 0.0, 0).unwrap();
        apply_degradation(&g, &spec).unwrap()
    }

    #[test]
    fn exact_at_observed_points() {
        let px = array![[0.3, 0.0, 0.7], [0.0, 0.5, 0.0], [0.1, 0.0, 0.9]];
        let mask = array![
            [true, false, true],
            [false, true, false],
            [true, false, true]
        ];
        let obs = inpaint_obs(px.clone(), mask.clone());
        let vg = Variogram::new(1.0, 3.0, 0.0).unwrap();
        let out = kriging_reconstruct(&obs, &vg).unwrap();
        for (idx, &observed) in mask.indexed_iter() {
            if observed {
                assert_eq!(out.pixels[idx], px[idx]);
            }
        }
    }

    #[test]
    fn pure_nugget_averages_two_points() {
        let px = array![[0.2, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.6]];
        let mask = array![
            [true, false, false],
            [false, false, false],
            [false, false, true]
        ];
        let obs = inpaint_obs(px, mask);
        // sill = nugget: flat semivariance for h > 0 makes all points
        // interchangeable, so the equal-weight mean comes out
        let vg = Variogram::new(0.5, 1e-6, 0.5).unwrap();
        let out = kriging_reconstruct(&obs, &vg).unwrap();
        assert!((out.pixels[(1, 1)] - 0.4).abs() < 1e-9, "{}", out.pixels[(1, 1)]);
        assert!((out.pixels[(0, 2)] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let pts: Vec<ObservedPoint> = (0..20)
            .map(|_| ObservedPoint {
                row: rng.gen_range(0.0..12.0),
                col: rng.gen_range(0.0..12.0),
                value: rng.gen_range(0.0..1.0),
            })
            .collect();
        let vg = Variogram::new(2.0, 4.0, 0.2).unwrap();
        for r in 0..12 {
            for c in 0..12 {
                let hood = nearest_indices(&pts, r as f64, c as f64, KRIGING_NEIGHBORS);
                let w = solve_weights(&pts, &hood, r as f64, c as f64, &vg).unwrap();
                let s: f64 = w.iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "sum {s} at ({r},{c})");
            }
        }
    }

    #[test]
    fn beats_idw_on_correlated_fields() {
        // median MSE over 20 fields with known exponential covariance
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let mut krig_mse = Vec::new();
        let mut idw_mse = Vec::new();
        for _ in 0..20 {
            let f = shadow_field(24, 24, 4.0, 6.0, &mut rng);
            let px = f.mapv(|v| (v / 40.0 + 0.5).clamp(0.0, 1.0));
            let mut mask = Array2::from_elem((24, 24), false);
            for _ in 0..120 {
                mask[(rng.gen_range(0..24), rng.gen_range(0..24))] = true;
            }
            let obs = inpaint_obs(px.clone(), mask);
            let vg = fit_variogram(&obs).unwrap();
            let krig = interpolate(&obs, &InterpolatorConfig::Kriging(vg)).unwrap();
            let idw = interpolate(&obs, &InterpolatorConfig::Idw { power: 2.0 }).unwrap();
            let mse = |est: &Array2<f64>| {
                est.iter()
                    .zip(px.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / px.len() as f64
            };
            krig_mse.push(mse(&krig));
            idw_mse.push(mse(&idw));
        }
        krig_mse.sort_by(|a, b| a.total_cmp(b));
        idw_mse.sort_by(|a, b| a.total_cmp(b));
        assert!(
            krig_mse[10] < idw_mse[10],
            "kriging median {} vs idw median {}",
            krig_mse[10],
            idw_mse[10]
        );
    }
}
