//! Training loop pieces: the random degradation mixture, the single
//! optimizer step, and a small driver that owns net + optimizer state.

use ckm_grid::{apply_degradation_with, CkmGrid, DegradationKind, DegradationSpec};
use ckm_tensor::{AdamWConfig, AdamWState, Graph, LrSchedule, Tensor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::Codec;
use crate::net::{DenoiserNet, ModelConfig};
use crate::process::ddm_forward_sample;
use crate::sample::condition_from_observation;
use crate::schedule::DT_MIN;
use crate::{DiffusionError, Result};

/// The training-time distribution over degradation operators: a uniform
/// mixture of Denoise, Inpaint with one random rectangle hidden, and
/// SuperRes with a random factor, each paired with a noise level drawn
/// uniformly from `noise_stds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationMixture {
    /// Hidden-rectangle extent as a fraction of each grid side.
    pub inpaint_fraction: f64,
    pub superres_factors: Vec<usize>,
    pub noise_stds: Vec<f64>,
}

impl Default for DegradationMixture {
    fn default() -> Self {
        DegradationMixture {
            inpaint_fraction: 0.25,
            superres_factors: vec![2, 4],
            noise_stds: vec![0.0, 30.0 / 255.0],
        }
    }
}

impl DegradationMixture {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.inpaint_fraction && self.inpaint_fraction < 1.0) {
            return Err(DiffusionError::Range(format!(
                "inpaint_fraction {} outside (0,1)",
                self.inpaint_fraction
            )));
        }
        if self.noise_stds.is_empty() || self.noise_stds.iter().any(|&s| s < 0.0 || !s.is_finite())
        {
            return Err(DiffusionError::Range(
                "noise_stds must be non-empty and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Draws one degradation for a grid of the given shape. SuperRes factors
    /// that do not divide the shape are silently ineligible.
    pub fn sample<R: Rng>(&self, shape: (usize, usize), rng: &mut R) -> Result<DegradationSpec> {
        self.validate()?;
        let (h, w) = shape;
        let sr: Vec<usize> = self
            .superres_factors
            .iter()
            .copied()
            .filter(|&m| m > 1 && h % m == 0 && w % m == 0)
            .collect();
        let families = if sr.is_empty() { 2 } else { 3 };
        let kind = match rng.gen_range(0..families) {
            0 => DegradationKind::Denoise,
            1 => {
                let rh = ((h as f64 * self.inpaint_fraction).round() as usize).clamp(1, h);
                let rw = ((w as f64 * self.inpaint_fraction).round() as usize).clamp(1, w);
                let r0 = rng.gen_range(0..=h - rh);
                let c0 = rng.gen_range(0..=w - rw);
                let mask = Array2::from_shape_fn((h, w), |(r, c)| {
                    !(r >= r0 && r < r0 + rh && c >= c0 && c < c0 + rw)
                });
                DegradationKind::Inpaint(mask)
            }
            _ => DegradationKind::SuperRes(sr[rng.gen_range(0..sr.len())]),
        };
        let std = self.noise_stds[rng.gen_range(0..self.noise_stds.len())];
        Ok(DegradationSpec::new(kind, std, rng.gen())?)
    }
}

/// One optimizer step on a batch of clean maps: per sample, draw a random
/// degradation, form the observation and its condition channels, draw
/// t ~ U(0,1) (floored at the smallest time step) and ε, build z_t, run the
/// net, and take one AdamW step on ‖c − c_θ‖² + ‖ε − ε_θ‖². Returns the
/// scalar loss; a non-finite loss aborts with the reproducing batch seed.
pub fn train_step<R: Rng>(
    net: &mut DenoiserNet,
    opt: &mut AdamWState,
    codec: &dyn Codec,
    mixture: &DegradationMixture,
    batch: &[&CkmGrid],
    rng: &mut R,
) -> Result<f64> {
    let seed = rng.gen();
    train_step_seeded(net, opt, codec, mixture, batch, seed)
}

/// [`train_step`] with an explicit batch seed; all randomness in the step
/// (degradations, noise, t, ε) derives from it.
pub fn train_step_seeded(
    net: &mut DenoiserNet,
    opt: &mut AdamWState,
    codec: &dyn Codec,
    mixture: &DegradationMixture,
    batch: &[&CkmGrid],
    seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(DiffusionError::Shape("empty training batch".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = batch.len();
    let (lh, lw) = net.config().image_size;
    let cc = net.config().cond_channels;
    let hw = lh * lw;

    let mut zt = Vec::with_capacity(n * hw);
    let mut cond = Vec::with_capacity(n * cc * hw);
    let mut c_target = Vec::with_capacity(n * hw);
    let mut eps_target = Vec::with_capacity(n * hw);
    let mut times = Vec::with_capacity(n);
    for grid in batch {
        let spec = mixture.sample(grid.shape(), &mut rng)?;
        let obs = apply_degradation_with(grid, &spec, &mut rng)?;
        let cnd = condition_from_observation(&obs)?;
        let z0 = codec.encode(&grid.pixels());
        if z0.dim() != (lh, lw) || cnd.dim() != (cc, lh, lw) {
            return Err(DiffusionError::Shape(format!(
                "latent {:?} / condition {:?}, model expects ({lh}, {lw}) with {cc} channels",
                z0.dim(),
                cnd.dim()
            )));
        }
        let z0: Vec<f64> = z0.iter().copied().collect();
        let t = rng.gen_range(0.0..1.0f64).max(DT_MIN);
        let eps: Vec<f64> = (0..hw).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        zt.extend(ddm_forward_sample(&z0, t, &eps)?);
        c_target.extend(z0.iter().map(|v| -v));
        eps_target.extend(eps);
        cond.extend(cnd.iter().copied());
        times.push(t);
    }

    let mut g = Graph::new();
    let p = net.bind(&mut g, true);
    let z_var = g.constant(Tensor::from_vec(vec![n, 1, lh, lw], zt)?);
    let cond_var = g.constant(Tensor::from_vec(vec![n, cc, lh, lw], cond)?);
    let feats = net.encode_condition(&mut g, &p, cond_var)?;
    let (c_hat, eps_hat) = net.forward(&mut g, &p, z_var, &times, &feats)?;
    let c_t = g.constant(Tensor::from_vec(vec![n, 1, lh, lw], c_target)?);
    let e_t = g.constant(Tensor::from_vec(vec![n, 1, lh, lw], eps_target)?);
    let loss_c = g.mse_between(c_hat, c_t)?;
    let loss_e = g.mse_between(eps_hat, e_t)?;
    let loss = g.add(loss_c, loss_e)?;
    let loss_value = g.value(loss).item();
    if !loss_value.is_finite() {
        return Err(DiffusionError::NonFinite {
            context: "training loss".into(),
            seed,
        });
    }
    g.backward(loss)?;
    let grads: Vec<&[f64]> = p
        .iter()
        .map(|&v| g.grad(v).expect("trainable leaves keep gradients"))
        .collect();
    opt.step(net.tensors_mut(), &grads)?;
    Ok(loss_value)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub model: ModelConfig,
    pub mixture: DegradationMixture,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainerConfig {
    pub fn new(model: ModelConfig, total_steps: usize) -> Self {
        TrainerConfig {
            model,
            mixture: DegradationMixture::default(),
            batch_size: 8,
            lr_start: 1e-3,
            lr_end: 1e-4,
            total_steps,
            weight_decay: 1e-4,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.mixture.validate()?;
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(DiffusionError::Range(
                "batch_size and total_steps must be positive".into(),
            ));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.weight_decay >= 0.0) {
            return Err(DiffusionError::Range(
                "learning rates must be positive, weight decay nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainBatchOutcome {
    pub step: usize,
    pub loss: f64,
    /// Reseed `train_step_seeded` with this to replay the exact batch.
    pub batch_seed: u64,
}

/// Owns the net, optimizer state, and batch sampling for a full run.
pub struct Trainer {
    net: DenoiserNet,
    opt: AdamWState,
    config: TrainerConfig,
    rng: ChaCha12Rng,
    steps_done: usize,
}

impl Trainer {
    pub fn new(config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let net = DenoiserNet::new(config.model.clone())?;
        Self::from_net(net, config)
    }

    /// Resume path: use an already-initialized (e.g. checkpointed) net.
    pub fn from_net(net: DenoiserNet, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        if net.config() != &config.model {
            return Err(DiffusionError::Checkpoint(
                "net does not match trainer model config".into(),
            ));
        }
        let adamw = AdamWConfig {
            schedule: LrSchedule {
                lr_start: config.lr_start,
                lr_end: config.lr_end,
                total_steps: config.total_steps,
            },
            weight_decay: config.weight_decay,
            ..Default::default()
        };
        let opt = AdamWState::new(adamw, &net.param_sizes());
        let rng = ChaCha12Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            net,
            opt,
            config,
            rng,
            steps_done: 0,
        })
    }

    pub fn net(&self) -> &DenoiserNet {
        &self.net
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn into_net(self) -> DenoiserNet {
        self.net
    }

    /// One step on a batch drawn uniformly (with replacement) from the corpus.
    pub fn step(&mut self, corpus: &[CkmGrid], codec: &dyn Codec) -> Result<TrainBatchOutcome> {
        if corpus.is_empty() {
            return Err(DiffusionError::Shape("empty training corpus".into()));
        }
        let batch: Vec<&CkmGrid> = (0..self.config.batch_size)
            .map(|_| &corpus[self.rng.gen_range(0..corpus.len())])
            .collect();
        let batch_seed = self.rng.gen();
        let loss = train_step_seeded(
            &mut self.net,
            &mut self.opt,
            codec,
            &self.config.mixture,
            &batch,
            batch_seed,
        )?;
        self.steps_done += 1;
        Ok(TrainBatchOutcome {
            step: self.steps_done,
            loss,
            batch_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::IdentityCodec;
    use ckm_grid::ValueMap;

    fn mini_config() -> ModelConfig {
        ModelConfig {
            image_size: (16, 16),
            base_channels: 8,
            channel_mults: vec![1, 2],
            blocks_per_level: 1,
            cond_channels: 3,
            time_dim: 8,
            groups: 4,
            seed: 1,
        }
    }

    fn mini_corpus(n: usize) -> Vec<CkmGrid> {
        (0..n)
            .map(|i| {
                let px = Array2::from_shape_fn((16, 16), |(r, c)| {
                    0.5 + 0.4 * (((r + 2 * c + i) % 13) as f64 / 12.0 - 0.5)
                });
                CkmGrid::from_pixels(px, ValueMap::RADIO_MAP_SEER, None).unwrap()
            })
            .collect()
    }

    #[test]
    fn mixture_draws_cover_all_families() {
        let m = DegradationMixture::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (mut den, mut inp, mut sr) = (0, 0, 0);
        for _ in 0..200 {
            let spec = m.sample((32, 32), &mut rng).unwrap();
            match spec.kind {
                DegradationKind::Denoise => den += 1,
                DegradationKind::Inpaint(mask) => {
                    inp += 1;
                    // one 8x8 rectangle hidden on a 32x32 grid
                    assert_eq!(mask.iter().filter(|&&v| !v).count(), 64);
                }
                DegradationKind::SuperRes(f) => {
                    sr += 1;
                    assert!(f == 2 || f == 4);
                }
                DegradationKind::Generate => unreachable!("not in the mixture"),
            }
            assert!(spec.noise_std == 0.0 || (spec.noise_std - 30.0 / 255.0).abs() < 1e-15);
        }
        assert!(den > 30 && inp > 30 && sr > 30, "{den}/{inp}/{sr}");
    }

    #[test]
    fn mixture_skips_non_dividing_factors() {
        let m = DegradationMixture::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let spec = m.sample((30, 30), &mut rng).unwrap();
            if let DegradationKind::SuperRes(f) = spec.kind {
                assert_eq!(f, 2);
            }
        }
        // shape where nothing divides: only two families remain
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..50 {
            let spec = m.sample((31, 31), &mut rng).unwrap();
            assert!(!matches!(spec.kind, DegradationKind::SuperRes(_)));
        }
    }

    #[test]
    fn mixture_validation() {
        let mut m = DegradationMixture::default();
        m.inpaint_fraction = 1.5;
        assert!(m.validate().is_err());
        let mut m = DegradationMixture::default();
        m.noise_stds.clear();
        assert!(m.validate().is_err());
    }

    #[test]
    fn single_step_returns_finite_positive_loss_and_moves_params() {
        let mut net = DenoiserNet::new(mini_config()).unwrap();
        let before: Vec<f64> = net.named_tensors()[0].1.data().to_vec();
        let mut opt = AdamWState::new(AdamWConfig::default(), &net.param_sizes());
        let corpus = mini_corpus(4);
        let batch: Vec<&CkmGrid> = corpus.iter().collect();
        let loss = train_step_seeded(
            &mut net,
            &mut opt,
            &IdentityCodec,
            &DegradationMixture::default(),
            &batch,
            42,
        )
        .unwrap();
        assert!(loss.is_finite() && loss > 0.0, "loss {loss}");
        assert_ne!(net.named_tensors()[0].1.data(), before.as_slice());
    }

    #[test]
    fn same_batch_seed_same_loss() {
        let run = || {
            let mut net = DenoiserNet::new(mini_config()).unwrap();
            let mut opt = AdamWState::new(AdamWConfig::default(), &net.param_sizes());
            let corpus = mini_corpus(4);
            let batch: Vec<&CkmGrid> = corpus.iter().collect();
            train_step_seeded(
                &mut net,
                &mut opt,
                &IdentityCodec,
                &DegradationMixture::default(),
                &batch,
                7,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_parameters_abort_with_batch_seed() {
        let mut net = DenoiserNet::new(mini_config()).unwrap();
        net.tensors_mut()[0].data_mut()[0] = f64::NAN;
        let mut opt = AdamWState::new(AdamWConfig::default(), &net.param_sizes());
        let corpus = mini_corpus(2);
        let batch: Vec<&CkmGrid> = corpus.iter().collect();
        let err = train_step_seeded(
            &mut net,
            &mut opt,
            &IdentityCodec,
            &DegradationMixture::default(),
            &batch,
            13,
        )
        .unwrap_err();
        match err {
            DiffusionError::NonFinite { seed, .. } => assert_eq!(seed, 13),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn oracle_predictions_make_the_loss_vanish() {
        // the two-term objective is exactly zero when both heads equal their
        // targets; checked on the loss construction itself
        let mut g = Graph::new();
        let t = Tensor::from_vec(vec![2, 1, 2, 2], (0..8).map(|v| v as f64 / 8.0).collect())
            .unwrap();
        let a = g.constant(t.clone());
        let b = g.constant(t);
        let l1 = g.mse_between(a, b).unwrap();
        let l2 = g.mse_between(b, a).unwrap();
        let loss = g.add(l1, l2).unwrap();
        assert_eq!(g.value(loss).item(), 0.0);
    }

    #[test]
    fn trainer_runs_and_counts_steps() {
        let mut cfg = TrainerConfig::new(mini_config(), 10);
        cfg.batch_size = 2;
        let mut trainer = Trainer::new(cfg).unwrap();
        let corpus = mini_corpus(6);
        for i in 1..=3 {
            let out = trainer.step(&corpus, &IdentityCodec).unwrap();
            assert_eq!(out.step, i);
            assert!(out.loss.is_finite());
        }
        assert_eq!(trainer.steps_done(), 3);
    }
}
