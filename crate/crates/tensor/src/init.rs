//! Weight initialization: truncated normal with std = gain / sqrt(fan_in).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

/// Truncated standard normal (resampling beyond 2 std), scaled to `std`.
pub fn trunc_normal<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= 2.0 {
                    return z * std;
                }
            }
        })
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape/product consistent")
}

/// Conv weight `[C_out, C_in, kh, kw]` with fan_in = C_in * kh * kw.
pub fn conv_weight<R: Rng>(shape: &[usize], gain: f64, rng: &mut R) -> Tensor {
    debug_assert_eq!(shape.len(), 4);
    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
    trunc_normal(shape, gain / fan_in.sqrt(), rng)
}

/// Linear weight `[in, out]` with fan_in = in.
pub fn linear_weight<R: Rng>(shape: &[usize], gain: f64, rng: &mut R) -> Tensor {
    debug_assert_eq!(shape.len(), 2);
    trunc_normal(shape, gain / (shape[0] as f64).sqrt(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn truncation_and_scale() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let t = trunc_normal(&[10_000], 0.5, &mut rng);
        assert!(t.data().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        let var: f64 = t.data().iter().map(|v| v * v).sum::<f64>() / 10_000.0;
        // variance of a 2-sigma truncated normal is ~0.774 sigma^2
        assert!((var / 0.25 - 0.774).abs() < 0.05, "var ratio {}", var / 0.25);
    }
}
