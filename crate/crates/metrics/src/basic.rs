use ckm_grid::ValueMap;
use ndarray::Array2;

use crate::{MetricsError, Result};

/// PSNR contribution of a perfectly reconstructed image (dB).
pub const PSNR_CAP_DB: f64 = 100.0;

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 1.0;

fn check_batch(x: &[Array2<f64>], xhat: &[Array2<f64>]) -> Result<()> {
    if x.is_empty() {
        return Err(MetricsError::Precondition("empty batch".into()));
    }
    if x.len() != xhat.len() {
        return Err(MetricsError::Shape(format!(
            "batch sizes {} vs {}",
            x.len(),
            xhat.len()
        )));
    }
    for (i, (a, b)) in x.iter().zip(xhat).enumerate() {
        if a.dim() != b.dim() {
            return Err(MetricsError::Shape(format!(
                "image {i}: {:?} vs {:?}",
                a.dim(),
                b.dim()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(format!("image {i}")));
        }
    }
    Ok(())
}

/// Pixel-level MSE over the whole batch: (1/(M·l·w))·ΣΣ(x − x_hat)².
pub fn mse_pixel(x: &[Array2<f64>], xhat: &[Array2<f64>]) -> Result<f64> {
    check_batch(x, xhat)?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (a, b) in x.iter().zip(xhat) {
        for (p, q) in a.iter().zip(b.iter()) {
            acc += (p - q) * (p - q);
            n += 1;
        }
    }
    Ok(acc / n as f64)
}

pub fn rmse(x: &[Array2<f64>], xhat: &[Array2<f64>]) -> Result<f64> {
    Ok(mse_pixel(x, xhat)?.sqrt())
}

/// Per-image Σ(x−x_hat)²/Σx², then batch mean. Images with zero signal power
/// are excluded; the second return is how many were dropped.
pub fn nmse(x: &[Array2<f64>], xhat: &[Array2<f64>]) -> Result<(f64, usize)> {
    check_batch(x, xhat)?;
    let mut acc = 0.0;
    let mut kept = 0usize;
    let mut excluded = 0usize;
    for (a, b) in x.iter().zip(xhat) {
        let power: f64 = a.iter().map(|p| p * p).sum();
        if power <= 0.0 {
            excluded += 1;
            continue;
        }
        let err: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
        acc += err / power;
        kept += 1;
    }
    if kept == 0 {
        return Err(MetricsError::Precondition(
            "every ground-truth image has zero power".into(),
        ));
    }
    Ok((acc / kept as f64, excluded))
}

/// MSE after mapping pixels back to channel gains in dB; for the affine
/// value maps this equals mse_pixel · (max_db − min_db)².
pub fn mse_gain(x: &[Array2<f64>], xhat: &[Array2<f64>], map: ValueMap) -> Result<f64> {
    check_batch(x, xhat)?;
    let span = map.max_db - map.min_db;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (a, b) in x.iter().zip(xhat) {
        for (p, q) in a.iter().zip(b.iter()) {
            let d = (p - q) * span;
            acc += d * d;
            n += 1;
        }
    }
    let out = acc / n as f64;
    debug_assert!((out - mse_pixel(x, xhat)? * span * span).abs() <= 1e-9 * (1.0 + out));
    Ok(out)
}

/// Per-image 10·log10(1/mse), batch mean. Perfect images contribute the
/// 100 dB cap; the second return counts them.
pub fn psnr(x: &[Array2<f64>], xhat: &[Array2<f64>]) -> Result<(f64, usize)> {
    check_batch(x, xhat)?;
    let mut acc = 0.0;
    let mut capped = 0usize;
    for (a, b) in x.iter().zip(xhat) {
        let mse: f64 = a
            .iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            / a.len() as f64;
        if mse <= 0.0 {
            acc += PSNR_CAP_DB;
            capped += 1;
        } else {
            acc += (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB);
        }
    }
    Ok((acc / x.len() as f64, capped))
}

fn global_ssim_one(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for (p, q) in a.iter().zip(b.iter()) {
        var_a += (p - mu_a) * (p - mu_a);
        var_b += (q - mu_b) * (q - mu_b);
        cov += (p - mu_a) * (q - mu_b);
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    let c1 = (K1 * L) * (K1 * L);
    let c2 = (K2 * L) * (K2 * L);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Global-statistics SSIM (means, variances, covariance over the whole
/// image), batch mean. L = 1, k1 = 0.01, k2 = 0.03.
pub fn ssim(x: &[Array2<f64>], xhat: &[Array2<f64>]) -> Result<f64> {
    check_batch(x, xhat)?;
    Ok(x.iter().zip(xhat).map(|(a, b)| global_ssim_one(a, b)).sum::<f64>() / x.len() as f64)
}

/// Mean-of-windows SSIM with square windows of the given side, stride 1,
/// edge windows truncated. Provided for comparison only; the global variant
/// above is the reference formula.
pub fn ssim_windowed(
    x: &[Array2<f64>],
    xhat: &[Array2<f64>],
    window: usize,
) -> Result<f64> {
    check_batch(x, xhat)?;
    if window == 0 {
        return Err(MetricsError::Precondition("window must be positive".into()));
    }
    let mut batch_acc = 0.0;
    for (a, b) in x.iter().zip(xhat) {
        let (h, w) = a.dim();
        let mut acc = 0.0;
        let mut count = 0usize;
        for r0 in 0..h.saturating_sub(window - 1).max(1) {
            for c0 in 0..w.saturating_sub(window - 1).max(1) {
                let r1 = (r0 + window).min(h);
                let c1 = (c0 + window).min(w);
                let wa = a.slice(ndarray::s![r0..r1, c0..c1]).to_owned();
                let wb = b.slice(ndarray::s![r0..r1, c0..c1]).to_owned();
                acc += global_ssim_one(&wa, &wb);
                count += 1;
            }
        }
        batch_acc += acc / count as f64;
    }
    Ok(batch_acc / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn b(v: Vec<Array2<f64>>) -> Vec<Array2<f64>> {
        v
    }

    #[test]
    fn mse_hand_cases() {
        let x = b(vec![array![[0.2]]]);
        let y = b(vec![array![[0.5]]]);
        assert!((mse_pixel(&x, &y).unwrap() - 0.09).abs() < 1e-15);
        assert_eq!(mse_pixel(&x, &x).unwrap(), 0.0);

        let x2 = b(vec![array![[0.3]], array![[0.0]]]);
        let y2 = b(vec![array![[0.0]], array![[0.1]]]);
        assert!((mse_pixel(&x2, &y2).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rmse_is_sqrt() {
        let x = b(vec![array![[0.2]]]);
        let y = b(vec![array![[0.5]]]);
        assert!((rmse(&x, &y).unwrap() - 0.3).abs() < 1e-15);
        let y2 = b(vec![array![[0.22]]]);
        assert!((rmse(&x, &y2).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn nmse_cases() {
        let x = b(vec![array![[1.0, 0.0]]]);
        let y = b(vec![array![[0.5, 0.5]]]);
        let (v, excl) = nmse(&x, &y).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(excl, 0);
        // x_hat = 0 gives exactly 1
        let z = b(vec![array![[0.0, 0.0]]]);
        assert!((nmse(&x, &z).unwrap().0 - 1.0).abs() < 1e-15);
        // zero-power image excluded
        let x2 = b(vec![array![[1.0, 0.0]], array![[0.0, 0.0]]]);
        let y2 = b(vec![array![[0.5, 0.5]], array![[0.1, 0.1]]]);
        let (v2, excl2) = nmse(&x2, &y2).unwrap();
        assert!((v2 - 0.5).abs() < 1e-15);
        assert_eq!(excl2, 1);
    }

    #[test]
    fn mse_gain_span_identity() {
        let x = b(vec![array![[0.5]]]);
        let y = b(vec![array![[0.6]]]);
        // 0.1 pixel error over a 100 dB span is a 10 dB gain error
        let g = mse_gain(&x, &y, ValueMap::RADIO_MAP_SEER).unwrap();
        assert!((g - 100.0).abs() < 1e-9, "{g}");
        let g2 = mse_gain(&x, &y, ValueMap::CKM_IMAGE_NET).unwrap();
        let p = mse_pixel(&x, &y).unwrap();
        assert!((g2 - p * 200.0 * 200.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_cases() {
        let x = b(vec![Array2::from_elem((10, 10), 0.5)]);
        let mut y = x.clone();
        y[0][(0, 0)] = 0.5 + 0.1; // mse = 0.01/100 = 1e-4
        let (p, capped) = psnr(&x, &y).unwrap();
        assert!((p - 40.0).abs() < 1e-9, "{p}");
        assert_eq!(capped, 0);
        let (pc, c) = psnr(&x, &x).unwrap();
        assert_eq!(pc, PSNR_CAP_DB);
        assert_eq!(c, 1);
    }

    #[test]
    fn ssim_basics() {
        let x = b(vec![array![[0.1, 0.9], [0.4, 0.6]]]);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        // inverted image: negative covariance pulls SSIM below zero
        let inv = b(vec![x[0].mapv(|v| 1.0 - v)]);
        assert!(ssim(&x, &inv).unwrap() < 0.0);
        // equal constants stabilized to 1
        let c = b(vec![Array2::from_elem((3, 3), 0.4)]);
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = Array2::from_shape_simple_fn((5, 5), || rng.gen_range(0.0..1.0));
            let c = Array2::from_shape_simple_fn((5, 5), || rng.gen_range(0.0..1.0));
            let s = ssim(&[a], &[c]).unwrap();
            assert!(s.abs() <= 1.0 + 1e-9, "{s}");
        }
    }

    #[test]
    fn windowed_ssim_runs() {
        let x = b(vec![Array2::from_shape_fn((8, 8), |(r, c)| {
            (r as f64 * 8.0 + c as f64) / 64.0
        })]);
        let s = ssim_windowed(&x, &x, 5).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = b(vec![array![[0.1, 0.2]]]);
        let y = b(vec![array![[0.1], [0.2]]]);
        assert!(mse_pixel(&x, &y).is_err());
        assert!(mse_pixel(&x, &[]).is_err());
    }
}
