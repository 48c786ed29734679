use nalgebra::{DMatrix, DVector};

use crate::{MetricsError, Result};

const MAX_DIM: usize = 256;

fn moments(feats: &[Vec<f64>], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = feats.len() as f64;
    let mut mu = DVector::zeros(dim);
    for f in feats {
        for (i, &v) in f.iter().enumerate() {
            mu[i] += v / n;
        }
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for f in feats {
        let d = DVector::from_iterator(dim, f.iter().copied()) - &mu;
        cov += &d * d.transpose() / n;
    }
    (mu, cov)
}

// symmetric PSD square root; negative eigenvalues from roundoff clip to 0
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// 2-Wasserstein distance between Gaussian fits of two feature sets:
/// ||mu_r - mu_c||^2 + Tr(S_r + S_c - 2·sqrt(S_r S_c)), with the cross
/// square root taken as sqrt(B S_c B) for B = sqrt(S_r) so the
/// eigendecomposition stays on a symmetric matrix.
pub fn frechet_distance(feats_real: &[Vec<f64>], feats_recon: &[Vec<f64>]) -> Result<f64> {
    for (name, side) in [("real", feats_real), ("recon", feats_recon)] {
        if side.len() < 2 {
            return Err(MetricsError::Precondition(format!(
                "{name} side needs >= 2 samples, got {}",
                side.len()
            )));
        }
        if side.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(format!("{name} features")));
        }
    }
    let dim = feats_real[0].len();
    if dim == 0 || dim > MAX_DIM {
        return Err(MetricsError::Precondition(format!(
            "feature dimension {dim} outside 1..={MAX_DIM}"
        )));
    }
    if feats_real
        .iter()
        .chain(feats_recon.iter())
        .any(|f| f.len() != dim)
    {
        return Err(MetricsError::Shape("inconsistent feature dimensions".into()));
    }

    let (mu_r, cov_r) = moments(feats_real, dim);
    let (mu_c, cov_c) = moments(feats_recon, dim);

    let b = sym_sqrt(&cov_r);
    let inner = &b * &cov_c * &b;
    let eig = inner.symmetric_eigen();
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();

    let mean_term = (mu_r - mu_c).norm_squared();
    let fd = mean_term + cov_r.trace() + cov_c.trace() - 2.0 * tr_sqrt;
    Ok(fd.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn identical_sets_are_zero() {
        let a = vec![vec![0.1, 0.4], vec![0.7, 0.2], vec![0.3, 0.9]];
        assert!(frechet_distance(&a, &a).unwrap() < 1e-8);
    }

    #[test]
    fn one_dim_mean_shift_closed_form() {
        // sample moments exactly: mean 0 var 1 vs mean 1 var 1
        let a = vec![vec![-1.0], vec![1.0]];
        let b = vec![vec![0.0], vec![2.0]];
        let fd = frechet_distance(&a, &b).unwrap();
        assert!((fd - 1.0).abs() < 1e-10, "{fd}");
    }

    #[test]
    fn one_dim_variance_gap_closed_form() {
        // mean 0 var 1 vs mean 0 var 4: (1 + 4 - 2*2) = 1
        let a = vec![vec![-1.0], vec![1.0]];
        let b = vec![vec![-2.0], vec![2.0]];
        let fd = frechet_distance(&a, &b).unwrap();
        assert!((fd - 1.0).abs() < 1e-10, "{fd}");
    }

    #[test]
    fn symmetric_and_nonnegative() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let draw = |rng: &mut ChaCha12Rng| {
            (0..12)
                .map(|_| {
                    (0..6)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-8, "{ab} vs {ba}");
        assert!(ab >= 0.0);
    }

    #[test]
    fn preconditions_enforced() {
        let one = vec![vec![0.0]];
        assert!(frechet_distance(&one, &one).is_err());
        let bad = vec![vec![f64::NAN], vec![0.0]];
        let ok = vec![vec![0.0], vec![1.0]];
        assert!(frechet_distance(&bad, &ok).is_err());
        let ragged = vec![vec![0.0], vec![0.0, 1.0]];
        assert!(frechet_distance(&ragged, &ok).is_err());
    }
}
