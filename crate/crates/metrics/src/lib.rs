//! Reconstruction quality metrics over normalized pixel batches, the
//! handcrafted Fréchet-distance feature extractor, and the benchmark table
//! renderer.

mod basic;
mod features;
mod frechet;
mod report;
mod table;

pub use basic::{
    mse_gain, mse_pixel, nmse, psnr, rmse, ssim, ssim_windowed, PSNR_CAP_DB,
};
pub use features::{builtin_feature_extractor, FEATURE_DIM};
pub use frechet::frechet_distance;
pub use report::{compute_report, render_csv, render_table, BenchRow, MetricsConfig, MetricsReport};
pub use table::{table_ratio_analysis, RatioAnalysis};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
