//! Reverse-process sampling and the observation → condition preprocessing.

use ckm_features::{condition_channels, CannyParams, BINARIZE_TAU_EXACT, BINARIZE_TAU_NOISY};
use ckm_grid::{pad_observation, DegradationKind, Observation};
use ckm_tensor::{Graph, Tensor};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::codec::Codec;
use crate::net::DenoiserNet;
use crate::process::ddm_reverse_step;
use crate::schedule::DdmSchedule;
use crate::{DiffusionError, Result};

/// Builds the model's conditioning image from an observation:
/// Denoise reshapes y, Inpaint zero-fills unobserved cells, SuperRes
/// nearest-upsamples the low-resolution image, Generate is all zeros. The
/// result goes through the standard gray/mask/edges channel stack; the noisy
/// binarization threshold is used whenever the observation carries noise.
pub fn condition_from_observation(obs: &Observation) -> Result<Array3<f64>> {
    let (l, w) = obs.source_shape;
    let gray = match &obs.spec.kind {
        DegradationKind::SuperRes(m) => {
            let (lp, wp) = (l / m, w / m);
            if obs.values.len() != lp * wp {
                return Err(DiffusionError::Shape(format!(
                    "SuperRes observation length {} != {}",
                    obs.values.len(),
                    lp * wp
                )));
            }
            let low = Array2::from_shape_vec((lp, wp), obs.values.clone()).expect("len checked");
            Array2::from_shape_fn((l, w), |(r, c)| low[(r / m, c / m)])
        }
        _ => pad_observation(obs)?,
    };
    let tau = if obs.spec.noise_std > 0.0 {
        BINARIZE_TAU_NOISY
    } else {
        BINARIZE_TAU_EXACT
    };
    Ok(condition_channels(&gray, tau, &CannyParams::default())?)
}

#[derive(Debug, Clone, Copy)]
pub struct SampleConfig {
    pub schedule: DdmSchedule,
    pub seed: u64,
}

/// Algorithm: start from z_1 ~ N(0,I), walk S reverse slices with the net's
/// heads, decode once, clamp to [0,1] once. `condition = None` is the pure
/// generation scenario (all-zero condition channels). Fully deterministic
/// for a fixed seed.
pub fn sample(
    net: &DenoiserNet,
    codec: &dyn Codec,
    condition: Option<&Array3<f64>>,
    cfg: &SampleConfig,
) -> Result<Array2<f64>> {
    let (lh, lw) = net.config().image_size;
    let cc = net.config().cond_channels;
    let cond_data: Vec<f64> = match condition {
        Some(c) => {
            if c.dim() != (cc, lh, lw) {
                return Err(DiffusionError::Shape(format!(
                    "condition shape {:?}, model expects ({cc}, {lh}, {lw})",
                    c.dim()
                )));
            }
            c.iter().copied().collect()
        }
        None => vec![0.0; cc * lh * lw],
    };
    let cond_tensor = Tensor::from_vec(vec![1, cc, lh, lw], cond_data)?;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let hw = lh * lw;
    let mut z: Vec<f64> = (0..hw).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let sch = cfg.schedule;
    for i in (1..=sch.steps()).rev() {
        let t = sch.time_of(i);
        let mut g = Graph::new();
        let p = net.bind(&mut g, false);
        let z_var = g.constant(Tensor::from_vec(vec![1, 1, lh, lw], z.clone())?);
        let cond_var = g.constant(cond_tensor.clone());
        let feats = net.encode_condition(&mut g, &p, cond_var)?;
        let (c_hat, eps_hat) = net.forward(&mut g, &p, z_var, &[t], &feats)?;
        let noise: Vec<f64> = if i > 1 {
            (0..hw).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        } else {
            vec![0.0; hw]
        };
        z = ddm_reverse_step(
            &z,
            t,
            sch.dt(),
            g.value(c_hat).data(),
            g.value(eps_hat).data(),
            &noise,
        )?;
    }
    let latent = Array2::from_shape_vec((lh, lw), z).expect("length consistent");
    let pixels = codec.decode(&latent);
    Ok(pixels.mapv(|v| v.clamp(0.0, 1.0)))
}
