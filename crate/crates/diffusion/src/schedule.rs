use serde::{Deserialize, Serialize};

use crate::{DiffusionError, Result};

/// Smallest admissible time step for the decoupled process.
pub const DT_MIN: f64 = 1e-4;

/// Uniform time discretization of [0, 1] into S reverse steps of Δt = 1/S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdmSchedule {
    steps: usize,
}

impl DdmSchedule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(DiffusionError::Schedule("S must be positive".into()));
        }
        let dt = 1.0 / steps as f64;
        if dt < DT_MIN {
            return Err(DiffusionError::Schedule(format!(
                "Δt = 1/{steps} is below the smallest time step {DT_MIN}"
            )));
        }
        Ok(DdmSchedule { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// Time at the start of reverse step `i` (1-based from the noise end):
    /// i = S gives t = 1, i = 1 gives t = Δt.
    pub fn time_of(&self, i: usize) -> f64 {
        i as f64 / self.steps as f64
    }
}

/// DDPM variance schedule: β_t in (0,1), α_t = 1 − β_t, ᾱ_t = Πα_s.
#[derive(Debug, Clone)]
pub struct DdpmSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DdpmSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(DiffusionError::Schedule("empty β sequence".into()));
        }
        if betas.iter().any(|&b| !(0.0..1.0).contains(&b) || b == 0.0) {
            return Err(DiffusionError::Schedule("β_t must lie in (0,1)".into()));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(DiffusionError::Schedule("β_t must be non-decreasing".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(DdpmSchedule { betas, alpha_bars })
    }

    /// The standard linear schedule from β₁ to β_T over T steps.
    pub fn linear(t_steps: usize, beta_1: f64, beta_t: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(DiffusionError::Schedule("T must be positive".into()));
        }
        let betas = (0..t_steps)
            .map(|i| {
                if t_steps == 1 {
                    beta_1
                } else {
                    beta_1 + (beta_t - beta_1) * i as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        Self::new(betas)
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// β_t for 1-based t.
    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.betas[t - 1])
    }

    /// ᾱ_t for 1-based t; ᾱ_0 = 1 by convention.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.betas.len() {
            return Err(DiffusionError::Range(format!(
                "t = {t} outside 1..={}",
                self.betas.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ddm_invariants() {
        let s = DdmSchedule::new(50).unwrap();
        assert_eq!(s.dt(), 0.02);
        assert_eq!(s.steps() as f64 * s.dt(), 1.0);
        assert!((s.time_of(50) - 1.0).abs() < 1e-15);
        assert!((s.time_of(1) - s.dt()).abs() < 1e-15);
        assert!(DT_MIN <= s.dt() && s.dt() <= 1.0);

        assert!(DdmSchedule::new(0).is_err());
        // 1/S would undercut the smallest admissible step
        assert!(DdmSchedule::new(20_000).is_err());
        assert!(DdmSchedule::new(10_000).is_ok());
        assert!(DdmSchedule::new(1).is_ok());
    }

    #[test]
    fn ddpm_alpha_bar_is_running_product_and_decreasing() {
        let sch = DdpmSchedule::linear(1000, 1e-4, 0.02).unwrap();
        assert_eq!(sch.len(), 1000);
        let mut prod = 1.0;
        for t in 1..=1000 {
            prod *= 1.0 - sch.beta(t).unwrap();
            assert_eq!(sch.alpha_bar(t).unwrap(), prod);
            assert!(sch.alpha_bar(t).unwrap() < sch.alpha_bar(t - 1).unwrap());
        }
        // the terminal marginal is essentially pure noise
        assert!(sch.alpha_bar(1000).unwrap() < 5e-5);
        assert!((sch.alpha_bar(0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ddpm_rejects_bad_betas() {
        assert!(DdpmSchedule::new(vec![]).is_err());
        assert!(DdpmSchedule::new(vec![0.0]).is_err());
        assert!(DdpmSchedule::new(vec![1.0]).is_err());
        assert!(DdpmSchedule::new(vec![0.2, 0.1]).is_err());
        assert!(DdpmSchedule::linear(0, 1e-4, 0.02).is_err());
    }

    #[test]
    fn ddpm_range_checks() {
        let sch = DdpmSchedule::linear(10, 1e-4, 0.02).unwrap();
        assert!(sch.beta(0).is_err());
        assert!(sch.beta(11).is_err());
        assert!(sch.alpha_bar(11).is_err());
    }
}
