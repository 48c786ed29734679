use serde::Serialize;

use crate::{MetricsError, Result};

/// Consistency analysis between a published (4-decimal rounded) pixel MSE /
/// gain MSE pair and the affine value-map identity mse_gain = mse_pixel·span².
#[derive(Debug, Clone, Serialize)]
pub struct RatioAnalysis {
    /// Ratio of the rounded values as printed.
    pub nominal_ratio: f64,
    pub span_squared: f64,
    /// |nominal_ratio − span²| / span².
    pub relative_gap: f64,
    /// Ratio interval implied by ±half-ulp rounding of both operands.
    pub ratio_interval: (f64, f64),
    /// Interval overlaps the ±5% band around span².
    pub consistent: bool,
}

/// Checks whether two table entries rounded to `decimals` places are
/// consistent with the span² identity within a 5% band.
pub fn table_ratio_analysis(
    mse_gain_rounded: f64,
    mse_pixel_rounded: f64,
    span: f64,
    decimals: u32,
) -> Result<RatioAnalysis> {
    if mse_pixel_rounded <= 0.0 || mse_gain_rounded <= 0.0 || span <= 0.0 {
        return Err(MetricsError::Precondition(
            "rounded MSEs and span must be positive".into(),
        ));
    }
    let half_ulp = 0.5 * 10f64.powi(-(decimals as i32));
    let g_lo = mse_gain_rounded - half_ulp;
    let g_hi = mse_gain_rounded + half_ulp;
    let p_lo = (mse_pixel_rounded - half_ulp).max(f64::MIN_POSITIVE);
    let p_hi = mse_pixel_rounded + half_ulp;
    let interval = (g_lo / p_hi, g_hi / p_lo);

    let span_sq = span * span;
    let nominal = mse_gain_rounded / mse_pixel_rounded;
    let band = (0.95 * span_sq, 1.05 * span_sq);
    let consistent = interval.0 <= band.1 && band.0 <= interval.1;
    Ok(RatioAnalysis {
        nominal_ratio: nominal,
        span_squared: span_sq,
        relative_gap: (nominal - span_sq).abs() / span_sq,
        ratio_interval: interval,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_pair_is_consistent_for_span_100() {
        let a = table_ratio_analysis(10.7240, 0.0011, 100.0, 4).unwrap();
        assert!(a.relative_gap < 0.05, "gap {}", a.relative_gap);
        assert!(a.consistent);
        assert!(a.ratio_interval.0 < 10_000.0 && 10_000.0 < a.ratio_interval.1);
    }

    #[test]
    fn span_200_pair_shows_residual_gap() {
        // 0.0030 vs 121.3142 with span 200: nominal 40438 vs 40000
        let a = table_ratio_analysis(121.3142, 0.0030, 200.0, 4).unwrap();
        assert!(a.relative_gap < 0.05);
        assert!(a.consistent);
    }

    #[test]
    fn inconsistent_pair_flagged() {
        let a = table_ratio_analysis(50.0, 0.0011, 100.0, 4).unwrap();
        assert!(!a.consistent);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(table_ratio_analysis(1.0, 0.0, 100.0, 4).is_err());
    }
}
