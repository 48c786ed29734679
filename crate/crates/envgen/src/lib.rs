//! Synthetic radio environments: rectangular building layouts and
//! dominant-path channel gain maps with log-distance path loss, spatially
//! correlated shadowing, multipath fading, and per-wall attenuation.

mod dataset;
mod environment;
mod propagation;

pub use dataset::{
    build_dataset, entry_file, DatasetEntry, DatasetManifest, Split, MANIFEST_SCHEMA_VERSION,
};
pub use environment::{generate_environment, EnvironmentSpec};
pub use propagation::{shadow_field, simulate_gain_map, wall_crossings, PropagationParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvGenError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("could not place transmitter outside buildings after {0} attempts")]
    TxPlacement(usize),
    #[error(transparent)]
    Grid(#[from] ckm_grid::GridError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EnvGenError>;
