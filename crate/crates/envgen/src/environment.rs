use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::{EnvGenError, Result};

const TX_RETRIES: usize = 100;

/// Layout parameters for one synthetic environment.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub height: usize,
    pub width: usize,
    pub building_count: usize,
    /// Inclusive side-length range in cells.
    pub building_size_range: (usize, usize),
    /// Transmitter cell; must end up outside every building.
    pub tx_position: (usize, usize),
    pub seed: u64,
}

impl EnvironmentSpec {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.building_size_range;
        if self.height == 0 || self.width == 0 {
            return Err(EnvGenError::InvalidSpec("grid dims must be positive".into()));
        }
        if lo == 0 || lo > hi || hi > self.height.min(self.width) {
            return Err(EnvGenError::InvalidSpec(format!(
                "bad building size range ({lo}, {hi})"
            )));
        }
        if self.tx_position.0 >= self.height || self.tx_position.1 >= self.width {
            return Err(EnvGenError::InvalidSpec("tx outside the grid".into()));
        }
        // keep enough free area for the tx and the map to be interesting
        if self.building_count * hi * hi >= self.height * self.width / 2 {
            return Err(EnvGenError::InvalidSpec(format!(
                "building budget {}x{hi}^2 exceeds half the grid",
                self.building_count
            )));
        }
        Ok(())
    }
}

/// Places axis-aligned rectangles (overlap allowed), retrying the whole layout
/// until the tx cell is free. Deterministic per seed.
pub fn generate_environment(spec: &EnvironmentSpec) -> Result<Array2<bool>> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.building_size_range;
    for _attempt in 0..TX_RETRIES {
        let mut mask = Array2::from_elem((spec.height, spec.width), false);
        for _ in 0..spec.building_count {
            let bh = rng.gen_range(lo..=hi);
            let bw = rng.gen_range(lo..=hi);
            let r0 = rng.gen_range(0..=spec.height - bh);
            let c0 = rng.gen_range(0..=spec.width - bw);
            for r in r0..r0 + bh {
                for c in c0..c0 + bw {
                    mask[(r, c)] = true;
                }
            }
        }
        if !mask[spec.tx_position] {
            return Ok(mask);
        }
    }
    Err(EnvGenError::TxPlacement(TX_RETRIES))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(count: usize) -> EnvironmentSpec {
        EnvironmentSpec {
            height: 64,
            width: 64,
            building_count: count,
            building_size_range: (4, 10),
            tx_position: (32, 32),
            seed: 77,
        }
    }

    #[test]
    fn zero_buildings_gives_empty_mask() {
        let m = generate_environment(&spec(0)).unwrap();
        assert!(m.iter().all(|&b| !b));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_environment(&spec(8)).unwrap();
        let b = generate_environment(&spec(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn covered_area_within_bounds() {
        let m = generate_environment(&spec(8)).unwrap();
        let covered = m.iter().filter(|&&b| b).count();
        assert!(covered <= 8 * 100, "covered {covered}");
        assert!(covered >= 16, "covered {covered}"); // at least one min building survives overlap
        assert!(!m[(32, 32)]);
    }

    #[test]
    fn rejects_oversized_budget() {
        let mut s = spec(40);
        s.building_size_range = (10, 10);
        assert!(generate_environment(&s).is_err());
    }
}
