//! Named degradation tasks and their desk-scale default parameters:
//! 32×32 maps with an 8×8 hidden square (25% of each side), 4× block
//! averaging, and noise std 30/255.

use anyhow::{bail, Result};
use ckm_grid::{DegradationKind, DegradationSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub const DEFAULT_NOISE_STD: f64 = 30.0 / 255.0;
pub const DEFAULT_MASK_FRAC: f64 = 0.25;
pub const DEFAULT_SR_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Denoise,
    Inpaint,
    Sr,
    Generate,
}

impl Task {
    pub fn parse(name: &str) -> Result<Task> {
        Ok(match name {
            "denoise" => Task::Denoise,
            "inpaint" => Task::Inpaint,
            "sr" => Task::Sr,
            "generate" => Task::Generate,
            other => bail!("unknown task '{other}' (expected denoise|inpaint|sr|generate)"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Denoise => "denoise",
            Task::Inpaint => "inpaint",
            Task::Sr => "sr",
            Task::Generate => "generate",
        }
    }
}

/// One hidden axis-aligned rectangle of `frac` of each side, placed by the
/// seed; the rest of the grid is observed.
pub fn inpaint_mask(shape: (usize, usize), frac: f64, seed: u64) -> Result<Array2<bool>> {
    let (h, w) = shape;
    if !(0.0 < frac && frac < 1.0) {
        bail!("mask fraction {frac} outside (0,1)");
    }
    let rh = ((h as f64 * frac).round() as usize).clamp(1, h);
    let rw = ((w as f64 * frac).round() as usize).clamp(1, w);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let r0 = rng.gen_range(0..=h - rh);
    let c0 = rng.gen_range(0..=w - rw);
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        !(r >= r0 && r < r0 + rh && c >= c0 && c < c0 + rw)
    }))
}

/// Builds the degradation spec for a task. `mask_frac` applies to Inpaint,
/// `factor` to Sr; unused knobs are ignored.
pub fn build_spec(
    task: Task,
    shape: (usize, usize),
    mask_frac: f64,
    factor: usize,
    noise_std: f64,
    seed: u64,
) -> Result<DegradationSpec> {
    let kind = match task {
        Task::Denoise => DegradationKind::Denoise,
        Task::Inpaint => DegradationKind::Inpaint(inpaint_mask(shape, mask_frac, seed)?),
        Task::Sr => {
            if factor == 0 || shape.0 % factor != 0 || shape.1 % factor != 0 {
                bail!("SR factor {factor} does not divide grid shape {shape:?}");
            }
            DegradationKind::SuperRes(factor)
        }
        Task::Generate => DegradationKind::Generate,
    };
    Ok(DegradationSpec::new(kind, noise_std, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inpaint_hides_an_8x8_square_on_32x32() {
        let m = inpaint_mask((32, 32), DEFAULT_MASK_FRAC, 5).unwrap();
        assert_eq!(m.iter().filter(|&&v| !v).count(), 64);
        // deterministic placement per seed
        assert_eq!(m, inpaint_mask((32, 32), DEFAULT_MASK_FRAC, 5).unwrap());
        assert_ne!(m, inpaint_mask((32, 32), DEFAULT_MASK_FRAC, 6).unwrap());
    }

    #[test]
    fn task_parsing_round_trips() {
        for name in ["denoise", "inpaint", "sr", "generate"] {
            assert_eq!(Task::parse(name).unwrap().name(), name);
        }
        assert!(Task::parse("superres").is_err());
    }

    #[test]
    fn sr_factor_must_divide() {
        assert!(build_spec(Task::Sr, (30, 30), 0.25, 4, 0.0, 0).is_err());
        assert!(build_spec(Task::Sr, (32, 32), 0.25, 4, 0.0, 0).is_ok());
    }
}
