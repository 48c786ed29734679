//! Model checkpoints: the tensor container format with a JSON header
//! carrying the architecture, schedule, codec id, and degradation mixture.

use std::path::Path;

use ckm_tensor::checkpoint::{read_checkpoint, write_checkpoint};
use serde::{Deserialize, Serialize};

use crate::net::{DenoiserNet, ModelConfig};
use crate::schedule::DdmSchedule;
use crate::train::DegradationMixture;
use crate::{DiffusionError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub schedule: DdmSchedule,
    pub codec_id: String,
    pub mixture: DegradationMixture,
    pub trained_steps: usize,
}

pub fn save_model(path: &Path, net: &DenoiserNet, meta: &CheckpointMeta) -> Result<()> {
    if meta.config != *net.config() {
        return Err(DiffusionError::Checkpoint(
            "meta config does not describe this net".into(),
        ));
    }
    let header = serde_json::to_vec(meta)
        .map_err(|e| DiffusionError::Checkpoint(format!("meta serialization: {e}")))?;
    write_checkpoint(path, &header, &net.named_tensors())?;
    Ok(())
}

/// Rebuilds the net from the stored config and overwrites every parameter
/// from the checkpoint; reports the parameter count on load.
pub fn load_model(path: &Path) -> Result<(DenoiserNet, CheckpointMeta)> {
    let (header, tensors) = read_checkpoint(path)?;
    let meta: CheckpointMeta = serde_json::from_slice(&header)
        .map_err(|e| DiffusionError::Checkpoint(format!("meta parse: {e}")))?;
    let mut net = DenoiserNet::new(meta.config.clone())?;
    let expected = net.named_tensors().len();
    if tensors.len() != expected {
        return Err(DiffusionError::Checkpoint(format!(
            "{} tensors in file, model has {expected}",
            tensors.len()
        )));
    }
    for (name, t) in tensors {
        net.set_tensor(&name, t)?;
    }
    eprintln!(
        "loaded model: {} parameters ({} tensors) from {}",
        net.param_count(),
        expected,
        path.display()
    );
    Ok((net, meta))
}
