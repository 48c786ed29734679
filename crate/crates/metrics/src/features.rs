use ndarray::Array2;

use crate::{MetricsError, Result};

const POOL: usize = 12;
const GRAD_BINS: usize = 8;
/// Pooled pixels + orientation histogram + gradient mean/std + mask ratio.
pub const FEATURE_DIM: usize = POOL * POOL + GRAD_BINS + 2 + 1;

/// Deterministic handcrafted image features for the Fréchet distance.
///
/// This is NOT an Inception embedding; distances computed from it are
/// reported as "FD (handcrafted)" and are not comparable to published FID
/// numbers. Adaptive average pooling keeps the dimension fixed across image
/// sizes.
pub fn builtin_feature_extractor(images: &[Array2<f64>]) -> Result<Vec<Vec<f64>>> {
    images.iter().map(features_one).collect()
}

fn features_one(img: &Array2<f64>) -> Result<Vec<f64>> {
    let (h, w) = img.dim();
    if h == 0 || w == 0 {
        return Err(MetricsError::Precondition("empty image".into()));
    }
    if img.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("image pixels".into()));
    }
    let mut out = Vec::with_capacity(FEATURE_DIM);

    // adaptive average pooling to POOL x POOL
    for pr in 0..POOL {
        let r0 = pr * h / POOL;
        let r1 = ((pr + 1) * h).div_ceil(POOL).max(r0 + 1).min(h);
        for pc in 0..POOL {
            let c0 = pc * w / POOL;
            let c1 = ((pc + 1) * w).div_ceil(POOL).max(c0 + 1).min(w);
            let mut acc = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    acc += img[(r, c)];
                }
            }
            out.push(acc / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }

    // magnitude-weighted gradient orientation histogram (central differences,
    // edge-clamped), normalized to sum 1 when any gradient exists
    let mut hist = [0.0f64; GRAD_BINS];
    let mut mags = Vec::with_capacity(h * w);
    let at = |r: i64, c: i64| img[(
        r.clamp(0, h as i64 - 1) as usize,
        c.clamp(0, w as i64 - 1) as usize,
    )];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let gx = (at(r, c + 1) - at(r, c - 1)) / 2.0;
            let gy = (at(r + 1, c) - at(r - 1, c)) / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            mags.push(mag);
            if mag > 0.0 {
                let angle = gy.atan2(gx); // [-pi, pi]
                let frac = (angle + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
                let bin = ((frac * GRAD_BINS as f64) as usize).min(GRAD_BINS - 1);
                hist[bin] += mag;
            }
        }
    }
    let total: f64 = hist.iter().sum();
    for b in hist {
        out.push(if total > 0.0 { b / total } else { 0.0 });
    }
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let var = mags.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / mags.len() as f64;
    out.push(mean);
    out.push(var.sqrt());

    // fraction of (near-)sentinel pixels, a building-footprint proxy
    let ratio = img.iter().filter(|&&v| v <= 2.0 / 255.0).count() as f64 / (h * w) as f64;
    out.push(ratio);

    debug_assert_eq!(out.len(), FEATURE_DIM);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, shift: usize) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(r, c)| {
            let c = c.saturating_sub(shift);
            ((r * w + c * c) % 97) as f64 / 97.0
        })
    }

    #[test]
    fn deterministic() {
        let imgs = vec![ramp(16, 16, 0), ramp(16, 16, 3)];
        let a = builtin_feature_extractor(&imgs).unwrap();
        let b = builtin_feature_extractor(&imgs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_fixed_across_sizes() {
        for (h, w) in [(8usize, 8usize), (16, 24), (33, 17), (64, 64)] {
            let f = builtin_feature_extractor(&[ramp(h, w, 0)]).unwrap();
            assert_eq!(f[0].len(), FEATURE_DIM);
        }
    }

    #[test]
    fn shift_changes_gradients_but_not_mask_ratio() {
        // a quarter of the pixels are sentinel-black in both variants
        let mut base = Array2::from_shape_fn((16, 16), |(r, c)| {
            0.2 + 0.7 * ((r + 2 * c) % 11) as f64 / 11.0
        });
        let mut shifted = Array2::from_shape_fn((16, 16), |(r, c)| {
            let c2 = if c >= 2 { c - 2 } else { 0 };
            0.2 + 0.7 * ((r + 2 * c2) % 11) as f64 / 11.0
        });
        for r in 0..8 {
            for c in 0..8 {
                base[(r, c)] = 0.0;
                shifted[(r, c)] = 0.0;
            }
        }
        let f = builtin_feature_extractor(&[base, shifted]).unwrap();
        let grad_a = &f[0][POOL * POOL..POOL * POOL + GRAD_BINS];
        let grad_b = &f[1][POOL * POOL..POOL * POOL + GRAD_BINS];
        assert_ne!(grad_a, grad_b);
        assert_eq!(f[0][FEATURE_DIM - 1], f[1][FEATURE_DIM - 1]);
        assert!((f[0][FEATURE_DIM - 1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut img = ramp(8, 8, 0);
        img[(0, 0)] = f64::INFINITY;
        assert!(builtin_feature_extractor(&[img]).is_err());
    }
}
