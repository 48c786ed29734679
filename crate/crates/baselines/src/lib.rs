//! Conventional CKM reconstruction methods used as oracles and comparison
//! baselines: least-squares pseudo-inverse, spatial interpolation (KNN,
//! bilinear, bicubic, IDW, ordinary Kriging), the statistical channel model
//! (path-loss fit plus residual Kriging), and Gaussian MAP/MMSE estimation.

mod gaussian;
mod interp;
mod kriging;
mod ls;
mod pathloss;
mod points;
mod variogram;

pub use gaussian::{map_reconstruct, mmse_reconstruct, GaussianPrior};
pub use interp::{interpolate, InterpolatorConfig};
pub use kriging::{kriging_reconstruct, KrigingOutput};
pub use ls::ls_reconstruct;
pub use pathloss::{fit_path_loss, PathLossFit};
pub use points::{observed_points, ObservedPoint};
pub use variogram::{fit_variogram, Variogram};
pub use pathloss::spatial_model_predict;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty observation: {0}")]
    EmptyObservation(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("singular system (condition estimate {condition:.3e}): {context}")]
    Singular { condition: f64, context: String },
    #[error(transparent)]
    Grid(#[from] ckm_grid::GridError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;
