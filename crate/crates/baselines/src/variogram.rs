use ckm_grid::Observation;

use crate::points::{observed_points, ObservedPoint};
use crate::{BaselineError, Result};

const N_BINS: usize = 12;
// pair accounting is O(n^2); larger observations are strided down to this
const MAX_FIT_POINTS: usize = 1500;

/// Exponential variogram model: gamma(h) = nugget + (sill - nugget)·(1 - e^{-h/range}).
#[derive(Debug, Clone, PartialEq)]
pub struct Variogram {
    pub sill: f64,
    pub range_param: f64,
    pub nugget: f64,
    /// Set when the observation carried no variance to fit against.
    pub degenerate: bool,
}

impl Variogram {
    pub fn new(sill: f64, range_param: f64, nugget: f64) -> Result<Self> {
        if sill < 0.0 || nugget < 0.0 || nugget > sill {
            return Err(BaselineError::Precondition(format!(
                "need 0 <= nugget <= sill, got nugget {nugget}, sill {sill}"
            )));
        }
        if !(range_param > 0.0) {
            return Err(BaselineError::Precondition(format!(
                "range must be positive, got {range_param}"
            )));
        }
        Ok(Self {
            sill,
            range_param,
            nugget,
            degenerate: false,
        })
    }

    /// Semivariance at lag h; exactly 0 at h = 0.
    pub fn semivariance(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + (self.sill - self.nugget) * (1.0 - (-h / self.range_param).exp())
        }
    }
}

/// Empirical semivariance gamma_hat(h) = mean of (y_i - y_j)^2 / 2, binned into
/// 12 equal-width lags up to half the grid diagonal, then an exponential
/// model least-squares fitted over the non-empty bins.
pub fn fit_variogram(obs: &Observation) -> Result<Variogram> {
    let pts = observed_points(obs)?;
    if pts.len() < 10 {
        return Err(BaselineError::Precondition(format!(
            "variogram fit needs >= 10 observed points, got {}",
            pts.len()
        )));
    }
    let (l, w) = obs.source_shape;
    let h_max = ((l * l + w * w) as f64).sqrt() / 2.0;

    let stride = pts.len().div_ceil(MAX_FIT_POINTS);
    let pts: Vec<&ObservedPoint> = pts.iter().step_by(stride).collect();

    let bin_width = h_max / N_BINS as f64;
    let mut sums = [0.0f64; N_BINS];
    let mut counts = [0usize; N_BINS];
    for (i, a) in pts.iter().enumerate() {
        for b in pts.iter().skip(i + 1) {
            let h = a.dist(b.row, b.col);
            if h <= 0.0 || h > h_max {
                continue;
            }
            let k = ((h / bin_width) as usize).min(N_BINS - 1);
            sums[k] += 0.5 * (a.value - b.value).powi(2);
            counts[k] += 1;
        }
    }

    // bins without pairs drop out of the fit
    let bins: Vec<(f64, f64)> = (0..N_BINS)
        .filter(|&k| counts[k] > 0)
        .map(|k| ((k as f64 + 0.5) * bin_width, sums[k] / counts[k] as f64))
        .collect();

    let gamma_peak = bins.iter().fold(0.0f64, |m, &(_, g)| m.max(g));
    if gamma_peak < 1e-15 || bins.len() < 2 {
        return Ok(Variogram {
            sill: 0.0,
            range_param: 1.0,
            nugget: 0.0,
            degenerate: true,
        });
    }

    // grid-search the nonlinear range; (nugget, partial sill) are linear LS
    let mut best = (f64::INFINITY, 0.0, 0.0, 1.0); // (sse, nugget, partial, range)
    let r_lo = (h_max / 50.0).max(1e-3);
    let r_hi = h_max * 2.0;
    for step in 0..48 {
        let range = r_lo * (r_hi / r_lo).powf(step as f64 / 47.0);
        let f: Vec<f64> = bins.iter().map(|&(h, _)| 1.0 - (-h / range).exp()).collect();
        let (nugget, partial) = linear_fit(&bins, &f);
        let sse: f64 = bins
            .iter()
            .zip(&f)
            .map(|(&(_, g), &fi)| (g - nugget - partial * fi).powi(2))
            .sum();
        if sse < best.0 {
            best = (sse, nugget, partial, range);
        }
    }
    let (_, nugget, partial, range) = best;
    Ok(Variogram {
        sill: nugget + partial,
        range_param: range,
        nugget,
        degenerate: false,
    })
}

// LS of gamma ~ nugget + partial * f, both clamped nonnegative
fn linear_fit(bins: &[(f64, f64)], f: &[f64]) -> (f64, f64) {
    let n = bins.len() as f64;
    let sf: f64 = f.iter().sum();
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sg: f64 = bins.iter().map(|&(_, g)| g).sum();
    let sfg: f64 = bins.iter().zip(f).map(|(&(_, g), &fi)| fi * g).sum();
    let det = n * sff - sf * sf;
    let (mut nugget, mut partial) = if det.abs() < 1e-12 {
        (0.0, 0.0)
    } else {
        (
            (sg * sff - sf * sfg) / det,
            (n * sfg - sf * sg) / det,
        )
    };
    if nugget < 0.0 {
        nugget = 0.0;
        partial = if sff > 0.0 { (sfg / sff).max(0.0) } else { 0.0 };
    }
    if partial < 0.0 {
        partial = 0.0;
        nugget = (sg / n).max(0.0);
    }
    (nugget, partial)
}
