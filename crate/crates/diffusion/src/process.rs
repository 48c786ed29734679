//! The elementwise forward/reverse kernels for both diffusion processes.
//! These are plain slice functions: the network, graph, and codec live a
//! layer above and only ever feed values in and out.

use crate::schedule::DdpmSchedule;
use crate::{DiffusionError, Result};

fn check_same_len(lens: &[usize], context: &str) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(DiffusionError::Shape(format!(
            "{context}: operand lengths {lens:?} differ"
        )));
    }
    Ok(())
}

/// Forward marginal sample z_t = (1 − t)·z0 + √t·ε.
pub fn ddm_forward_sample(z0: &[f64], t: f64, eps: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(DiffusionError::Range(format!("t = {t} outside [0, 1]")));
    }
    check_same_len(&[z0.len(), eps.len()], "ddm_forward_sample")?;
    let st = t.sqrt();
    Ok(z0
        .iter()
        .zip(eps)
        .map(|(&z, &e)| (1.0 - t) * z + st * e)
        .collect())
}

/// One reverse slice z_{t−Δt} = z_t − Δt·c_hat − (Δt/√t)·ε_hat + σ·noise
/// with σ = √(Δt(t−Δt)/t). At the final step (t = Δt) the noise coefficient
/// is exactly zero, so `noise` may be anything there.
///
/// Intermediate states are never clamped; pixel-range clamping happens once
/// after decoding.
pub fn ddm_reverse_step(
    z_t: &[f64],
    t: f64,
    dt: f64,
    c_hat: &[f64],
    eps_hat: &[f64],
    noise: &[f64],
) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt <= t && t <= 1.0) {
        return Err(DiffusionError::Range(format!(
            "need 0 < Δt ≤ t ≤ 1, got Δt = {dt}, t = {t}"
        )));
    }
    check_same_len(
        &[z_t.len(), c_hat.len(), eps_hat.len(), noise.len()],
        "ddm_reverse_step",
    )?;
    let drift = dt / t.sqrt();
    let sigma = (dt * (t - dt) / t).max(0.0).sqrt();
    Ok(z_t
        .iter()
        .zip(c_hat)
        .zip(eps_hat)
        .zip(noise)
        .map(|(((&z, &c), &e), &n)| z - dt * c - drift * e + sigma * n)
        .collect())
}

/// DDPM forward marginal x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε for 1-based t.
pub fn ddpm_forward(x0: &[f64], t: usize, eps: &[f64], sch: &DdpmSchedule) -> Result<Vec<f64>> {
    // ᾱ_0 = 1 is a convention for the reverse step; the marginal itself is
    // only defined for 1 ≤ t ≤ T
    sch.beta(t)?;
    let ab = sch.alpha_bar(t)?;
    check_same_len(&[x0.len(), eps.len()], "ddpm_forward")?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// DDPM reverse step: mean (1/√α_t)(x_t − β_t/√(1−ᾱ_t)·ε_hat) plus
/// √σ_t²·noise with σ_t² = ((1−ᾱ_{t−1})/(1−ᾱ_t))·β_t; noise is ignored at
/// t = 1 (the last step is deterministic).
pub fn ddpm_reverse_step(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    noise: &[f64],
    sch: &DdpmSchedule,
) -> Result<Vec<f64>> {
    let beta = sch.beta(t)?;
    let ab_t = sch.alpha_bar(t)?;
    let ab_prev = sch.alpha_bar(t - 1)?;
    check_same_len(&[x_t.len(), eps_hat.len(), noise.len()], "ddpm_reverse_step")?;
    let inv_sqrt_alpha = 1.0 / (1.0 - beta).sqrt();
    let eps_coef = beta / (1.0 - ab_t).sqrt();
    let sigma = if t == 1 {
        0.0
    } else {
        ((1.0 - ab_prev) / (1.0 - ab_t) * beta).sqrt()
    };
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .zip(noise)
        .map(|((&x, &e), &n)| inv_sqrt_alpha * (x - eps_coef * e) + sigma * n)
        .collect())
}
