//! Conditional decoupled diffusion for channel-knowledge-map reconstruction,
//! plus a DDPM reference scheduler and a latent-codec wrapper.
//!
//! The forward process mixes the clean latent toward pure noise linearly in
//! time, `z_t = (1 − t)·z0 + √t·ε`, and the reverse process undoes one Δt
//! slice per step using two learned heads: `c_θ` (the constant drift, −z0)
//! and `ε_θ` (the injected noise). Everything runs in pixel space by default;
//! [`Codec`] keeps the latent hook open.

mod codec;
mod net;
mod process;
mod sample;
mod schedule;
mod store;
mod train;

pub use codec::{
    codec_round_trip_mse, validate_codec, Codec, DownsampleCodec, IdentityCodec, ScaleCodec,
    CODEC_MSE_THRESHOLD,
};
pub use net::{ConditionEncoder, DenoiserNet, ModelConfig};
pub use process::{ddm_forward_sample, ddm_reverse_step, ddpm_forward, ddpm_reverse_step};
pub use sample::{condition_from_observation, sample, SampleConfig};
pub use schedule::{DdmSchedule, DdpmSchedule, DT_MIN};
pub use store::{load_model, save_model, CheckpointMeta};
pub use train::{train_step, DegradationMixture, TrainBatchOutcome, Trainer, TrainerConfig};

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {context} (batch seed {seed})")]
    NonFinite { context: String, seed: u64 },
    #[error("codec unusable: {0}")]
    Codec(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Grid(#[from] ckm_grid::GridError),
    #[error(transparent)]
    Feature(#[from] ckm_features::FeatureError),
    #[error(transparent)]
    Tensor(#[from] ckm_tensor::TensorError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
