use ckm_grid::{materialize_matrix, Observation};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::{BaselineError, Result};

const MAX_SIDE: usize = 32;
const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = -1e-10;

/// Dense Gaussian prior over the vectorized (row-major) grid. Oracle scale
/// only: the covariance is materialized, so grids are capped at 32x32.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(BaselineError::Precondition(format!(
                "covariance {}x{} does not match mean length {n}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(BaselineError::Precondition(format!(
                        "covariance asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = covariance.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < EIGEN_TOL) {
            return Err(BaselineError::Precondition(
                "covariance has a negative eigenvalue".into(),
            ));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Posterior-mode estimate under the Gaussian prior. For a linear-Gaussian
/// model the mode and the posterior mean are the same point, so this is the
/// innovation form x_hat = mu + Sigma A^T (A Sigma A^T + s^2 I)^{-1} (y - A mu).
pub fn map_reconstruct(obs: &Observation, prior: &GaussianPrior) -> Result<Array2<f64>> {
    gaussian_posterior_mean(obs, prior)
}

/// Minimum-mean-square-error estimate; coincides with [`map_reconstruct`]
/// under the Gaussian prior (asserted in tests).
pub fn mmse_reconstruct(obs: &Observation, prior: &GaussianPrior) -> Result<Array2<f64>> {
    gaussian_posterior_mean(obs, prior)
}

fn gaussian_posterior_mean(obs: &Observation, prior: &GaussianPrior) -> Result<Array2<f64>> {
    let (l, w) = obs.source_shape;
    if l > MAX_SIDE || w > MAX_SIDE {
        return Err(BaselineError::Precondition(format!(
            "dense Gaussian oracle capped at {MAX_SIDE}x{MAX_SIDE}, got {l}x{w}"
        )));
    }
    if !(obs.spec.noise_std > 0.0) {
        return Err(BaselineError::Precondition(
            "Gaussian reconstruction needs noise_std > 0".into(),
        ));
    }
    if prior.mean.len() != l * w {
        return Err(BaselineError::Precondition(format!(
            "prior dimension {} != grid size {}",
            prior.mean.len(),
            l * w
        )));
    }
    let a_nd = materialize_matrix(&obs.spec, l, w)?;
    let m = a_nd.nrows();
    let a = DMatrix::from_row_iterator(m, l * w, a_nd.iter().copied());
    let y = DVector::from_column_slice(&obs.values);

    if m == 0 {
        // nothing observed: posterior mean is the prior mean
        return Ok(Array2::from_shape_vec((l, w), prior.mean.iter().copied().collect())
            .expect("dimension checked"));
    }

    let sigma_at = &prior.covariance * a.transpose();
    let mut s = &a * &sigma_at;
    let s2 = obs.spec.noise_std * obs.spec.noise_std;
    for i in 0..m {
        s[(i, i)] += s2;
    }
    let innovation = y - &a * &prior.mean;
    let solved = s
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&innovation))
        .or_else(|| s.lu().solve(&innovation))
        .ok_or(BaselineError::Singular {
            condition: f64::INFINITY,
            context: "innovation covariance not invertible".into(),
        })?;
    let x = &prior.mean + sigma_at * solved;
    Ok(Array2::from_shape_vec((l, w), x.iter().copied().collect()).expect("dimension checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ckm_grid::{apply_degradation, CkmGrid, DegradationKind, DegradationSpec, ValueMap};
    use ndarray::array;

    fn denoise_obs(px: Array2<f64>, noise_std: f64) -> Observation {
        let g = CkmGrid::from_pixels(px, ValueMap::CKM_IMAGE_NET, None).unwrap();
        let spec = DegradationSpec::new(DegradationKind::Denoise, noise_std, 0).unwrap();
        let mut obs = apply_degradation(&g, &spec).unwrap();
        // keep y = A x exactly; the noise level only enters the estimator
        obs.values = g.pixels().iter().copied().collect();
        obs
    }

    fn flat_prior(n: usize, mean: f64, var: f64) -> GaussianPrior {
        GaussianPrior::new(
            DVector::from_element(n, mean),
            DMatrix::identity(n, n) * var,
        )
        .unwrap()
    }

    #[test]
    fn small_noise_trusts_observation() {
        let px = array![[0.2, 0.8], [0.5, 0.3]];
        let obs = denoise_obs(px.clone(), 1e-6);
        let x = mmse_reconstruct(&obs, &flat_prior(4, 0.5, 1.0)).unwrap();
        for (a, b) in x.iter().zip(px.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn large_noise_regresses_to_the_mean() {
        let px = array![[0.2, 0.8], [0.5, 0.3]];
        let obs = denoise_obs(px, 1e6);
        let x = mmse_reconstruct(&obs, &flat_prior(4, 0.5, 1.0)).unwrap();
        for a in x.iter() {
            assert!((a - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn map_equals_mmse() {
        let px = array![[0.2, 0.8], [0.5, 0.3]];
        let obs = denoise_obs(px, 0.3);
        let mut cov = DMatrix::identity(4, 4);
        cov[(0, 1)] = 0.4;
        cov[(1, 0)] = 0.4;
        let prior = GaussianPrior::new(DVector::from_element(4, 0.4), cov).unwrap();
        let a = map_reconstruct(&obs, &prior).unwrap();
        let b = mmse_reconstruct(&obs, &prior).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn two_cell_toy_matches_hand_solution_and_brute_force() {
        // mu = 0, Sigma = [[1, 0.9], [0.9, 1]], observe cell 0 = 1.0, s^2 = 0.1
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let prior = GaussianPrior::new(DVector::zeros(2), cov.clone()).unwrap();
        let mask = array![[true, false]];
        let spec =
            DegradationSpec::new(DegradationKind::Inpaint(mask), 0.1f64.sqrt(), 0).unwrap();
        let obs = Observation {
            values: vec![1.0],
            spec,
            source_shape: (1, 2),
        };
        let x = map_reconstruct(&obs, &prior).unwrap();
        assert!((x[(0, 0)] - 1.0 / 1.1).abs() < 1e-9, "{}", x[(0, 0)]);
        assert!((x[(0, 1)] - 0.9 / 1.1).abs() < 1e-9, "{}", x[(0, 1)]);

        // brute-force grid search over the unnormalized posterior density
        let prec = cov.try_inverse().unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut t0 = 0.0;
        while t0 <= 1.2 {
            let mut t1 = 0.0;
            while t1 <= 1.2 {
                let v = DVector::from_column_slice(&[t0, t1]);
                let log_prior = -0.5 * (v.transpose() * &prec * &v)[(0, 0)];
                let log_lik = -0.5 * (1.0 - t0) * (1.0 - t0) / 0.1;
                let lp = log_prior + log_lik;
                if lp > best.0 {
                    best = (lp, t0, t1);
                }
                t1 += 0.002;
            }
            t0 += 0.002;
        }
        assert!((best.1 - x[(0, 0)]).abs() < 2e-3, "argmax {} vs {}", best.1, x[(0, 0)]);
        assert!((best.2 - x[(0, 1)]).abs() < 2e-3);
    }

    #[test]
    fn non_psd_prior_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalue -1
        assert!(GaussianPrior::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn asymmetric_prior_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.1, 1.0]);
        assert!(GaussianPrior::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn zero_noise_rejected() {
        let px = array![[0.2, 0.8]];
        let obs = denoise_obs(px, 0.0);
        assert!(map_reconstruct(&obs, &flat_prior(2, 0.5, 1.0)).is_err());
    }

    #[test]
    fn generate_returns_prior_mean() {
        let spec = DegradationSpec::new(DegradationKind::Generate, 0.5, 0).unwrap();
        let obs = Observation {
            values: vec![],
            spec,
            source_shape: (2, 2),
        };
        let x = mmse_reconstruct(&obs, &flat_prior(4, 0.37, 1.0)).unwrap();
        assert!(x.iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }
}
