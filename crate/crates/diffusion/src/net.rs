//! The conditional two-headed UNet and its condition encoder.
//!
//! The encoder/decoder trunk is a standard residual UNet with GroupNorm,
//! SiLU, sinusoidal time embeddings projected into every residual block,
//! and nearest-neighbor upsampling. Condition features from a small conv
//! pyramid are concatenated channel-wise at each decoder level's input; the
//! trunk ends in two separate heads of two stacked convolutions predicting
//! the drift c and the noise ε.

use ckm_tensor::{init, Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{DiffusionError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: (usize, usize),
    pub base_channels: usize,
    /// Channel multiplier per resolution level; the spatial size halves at
    /// each level after the first.
    pub channel_mults: Vec<usize>,
    pub blocks_per_level: usize,
    pub cond_channels: usize,
    pub time_dim: usize,
    pub groups: usize,
    /// Weight-init seed, stored so a config reproduces the same net.
    pub seed: u64,
}

impl ModelConfig {
    /// Smallest config that still trains: sized so a 20k-step run on 32×32
    /// maps finishes within a desk-CPU budget.
    pub fn tiny() -> Self {
        ModelConfig {
            image_size: (32, 32),
            base_channels: 8,
            channel_mults: vec![1, 2],
            blocks_per_level: 1,
            cond_channels: 3,
            time_dim: 16,
            groups: 4,
            seed: 0,
        }
    }

    /// Default desk-scale config for 32×32 maps.
    pub fn desk() -> Self {
        ModelConfig {
            image_size: (32, 32),
            base_channels: 32,
            channel_mults: vec![1, 2, 4],
            blocks_per_level: 2,
            cond_channels: 3,
            time_dim: 64,
            groups: 8,
            seed: 0,
        }
    }

    /// The documented full-scale preset (128×128, multipliers [1,2,4,8],
    /// two blocks per level); kept for reference, not for CPU training.
    pub fn paper_scale() -> Self {
        ModelConfig {
            image_size: (128, 128),
            base_channels: 32,
            channel_mults: vec![1, 2, 4, 8],
            blocks_per_level: 2,
            cond_channels: 3,
            time_dim: 128,
            groups: 8,
            seed: 0,
        }
    }

    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mults[level]
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(DiffusionError::Shape(m));
        if self.channel_mults.is_empty() {
            return err("channel_mults must be non-empty".into());
        }
        if self.base_channels == 0 || self.blocks_per_level == 0 || self.cond_channels == 0 {
            return err("channels and block counts must be positive".into());
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            return err(format!("time_dim {} must be even and ≥ 2", self.time_dim));
        }
        if self.groups == 0 {
            return err("groups must be positive".into());
        }
        for (l, _) in self.channel_mults.iter().enumerate() {
            if self.channels(l) % self.groups != 0 {
                return err(format!(
                    "level {l} channels {} not divisible by groups {}",
                    self.channels(l),
                    self.groups
                ));
            }
        }
        let down = 1usize << (self.levels() - 1);
        let (h, w) = self.image_size;
        if h == 0 || w == 0 || h % down != 0 || w % down != 0 || h / down == 0 || w / down == 0 {
            return err(format!(
                "image {h}x{w} must be divisible by 2^(levels-1) = {down}"
            ));
        }
        Ok(())
    }
}

/// Flat named-parameter storage; the graph gets a leaf per entry in a fixed
/// order, so optimizer state, gradients, and checkpoints all align by index.
#[derive(Debug, Clone)]
pub(crate) struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub(crate) fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| g.leaf(t.clone(), trainable))
            .collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub(crate) fn named(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.names.iter().zip(&self.tensors)
    }

    pub(crate) fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.numel()).collect()
    }

    pub(crate) fn set(&mut self, name: &str, t: Tensor) -> Result<()> {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DiffusionError::Checkpoint(format!("unknown tensor {name}")))?;
        if self.tensors[idx].shape() != t.shape() {
            return Err(DiffusionError::Checkpoint(format!(
                "tensor {name}: shape {:?} does not match model shape {:?}",
                t.shape(),
                self.tensors[idx].shape()
            )));
        }
        self.tensors[idx] = t;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvP {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormP {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinP {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct ResP {
    n1: NormP,
    c1: ConvP,
    t: LinP,
    n2: NormP,
    c2: ConvP,
}

#[derive(Debug, Clone)]
struct EncLevel {
    blocks: Vec<ResP>,
    /// Present below the deepest level: pool then 3×3 conv to the next width.
    down: Option<ConvP>,
}

#[derive(Debug, Clone)]
struct DecLevel {
    /// 3×3 conv fusing trunk + skip + condition channels back to the level
    /// width.
    fuse: ConvP,
    blocks: Vec<ResP>,
    /// Present above level 0: upsample then 3×3 conv to the shallower width.
    up: Option<ConvP>,
}

/// Conv pyramid over the conditioning channels: one feature map per decoder
/// level, width-matched to the trunk, halving resolution level by level.
#[derive(Debug, Clone)]
pub struct ConditionEncoder {
    convs: Vec<ConvP>,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha12Rng,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, gain: f64) -> ConvP {
        let w = init::conv_weight(&[cout, cin, 3, 3], gain, &mut self.rng);
        ConvP {
            w: self.store.push(format!("{name}.w"), w),
            b: self.store.push(format!("{name}.b"), Tensor::zeros(&[cout])),
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormP {
        NormP {
            gamma: self
                .store
                .push(format!("{name}.gamma"), Tensor::full(&[c], 1.0)),
            beta: self.store.push(format!("{name}.beta"), Tensor::zeros(&[c])),
        }
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> LinP {
        let w = init::linear_weight(&[din, dout], 1.0, &mut self.rng);
        LinP {
            w: self.store.push(format!("{name}.w"), w),
            b: self.store.push(format!("{name}.b"), Tensor::zeros(&[dout])),
        }
    }

    fn res(&mut self, name: &str, c: usize, time_dim: usize) -> ResP {
        ResP {
            n1: self.norm(&format!("{name}.n1"), c),
            c1: self.conv(&format!("{name}.c1"), c, c, 2f64.sqrt()),
            t: self.linear(&format!("{name}.t"), time_dim, c),
            n2: self.norm(&format!("{name}.n2"), c),
            // small-gain second conv keeps the residual branch quiet at init
            c2: self.conv(&format!("{name}.c2"), c, c, 0.2),
        }
    }
}

/// The two-headed conditional denoiser.
pub struct DenoiserNet {
    config: ModelConfig,
    store: ParamStore,
    stem: ConvP,
    enc: Vec<EncLevel>,
    mid: ResP,
    /// Decoder levels in processing order (deepest first).
    dec: Vec<DecLevel>,
    head_c: (ConvP, ConvP),
    head_eps: (ConvP, ConvP),
    cond: ConditionEncoder,
}

impl DenoiserNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha12Rng::seed_from_u64(config.seed),
        };
        let levels = config.levels();
        let td = config.time_dim;

        let stem = b.conv("stem", 1, config.base_channels, 1.0);
        let mut enc = Vec::with_capacity(levels);
        for l in 0..levels {
            let c = config.channels(l);
            let blocks = (0..config.blocks_per_level)
                .map(|i| b.res(&format!("enc{l}.block{i}"), c, td))
                .collect();
            let down = (l + 1 < levels)
                .then(|| b.conv(&format!("down{l}"), c, config.channels(l + 1), 1.0));
            enc.push(EncLevel { blocks, down });
        }
        let mid = b.res("mid.block0", config.channels(levels - 1), td);

        let cond_convs = (0..levels)
            .map(|l| {
                let cin = if l == 0 {
                    config.cond_channels
                } else {
                    config.channels(l - 1)
                };
                b.conv(&format!("cond.level{l}"), cin, config.channels(l), 2f64.sqrt())
            })
            .collect();

        let mut dec = Vec::with_capacity(levels);
        for l in (0..levels).rev() {
            let c = config.channels(l);
            // trunk + encoder skip + condition feature, all at width c
            let fuse = b.conv(&format!("dec{l}.fuse"), 3 * c, c, 1.0);
            let blocks = (0..config.blocks_per_level)
                .map(|i| b.res(&format!("dec{l}.block{i}"), c, td))
                .collect();
            let up = (l > 0).then(|| b.conv(&format!("up{l}"), c, config.channels(l - 1), 1.0));
            dec.push(DecLevel { fuse, blocks, up });
        }

        let c0 = config.base_channels;
        let head_c = (b.conv("head_c.0", c0, c0, 2f64.sqrt()), b.conv("head_c.1", c0, 1, 0.1));
        let head_eps = (
            b.conv("head_eps.0", c0, c0, 2f64.sqrt()),
            b.conv("head_eps.1", c0, 1, 0.1),
        );

        Ok(DenoiserNet {
            config,
            store,
            stem,
            enc,
            mid,
            dec,
            head_c,
            head_eps,
            cond: ConditionEncoder { convs: cond_convs },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.store.sizes().iter().sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.store.sizes()
    }

    /// Creates one graph leaf per parameter; pass the result to
    /// [`DenoiserNet::forward`]. `trainable` controls gradient tracking.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.store.bind(g, trainable)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.store.tensors_mut()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.store.named().map(|(n, t)| (n.clone(), t)).collect()
    }

    pub(crate) fn set_tensor(&mut self, name: &str, t: Tensor) -> Result<()> {
        self.store.set(name, t)
    }

    /// Multi-level condition features for `cond` of shape
    /// [N, cond_channels, H, W]; index l matches decoder level l.
    pub fn encode_condition(&self, g: &mut Graph, p: &[Var], cond: Var) -> Result<Vec<Var>> {
        let mut feats = Vec::with_capacity(self.config.levels());
        let mut h = cond;
        for (l, cv) in self.cond.convs.iter().enumerate() {
            if l > 0 {
                h = g.avg_pool2d(h, 2)?;
            }
            h = conv(g, p, *cv, h)?;
            h = g.silu(h);
            feats.push(h);
        }
        Ok(feats)
    }

    /// Runs the trunk on z_t [N,1,H,W] with per-sample times `t` and the
    /// condition features from [`DenoiserNet::encode_condition`]; returns
    /// (c_hat, ε_hat), both [N,1,H,W].
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        z_t: Var,
        t: &[f64],
        cond_feats: &[Var],
    ) -> Result<(Var, Var)> {
        let (ih, iw) = self.config.image_size;
        let shape = g.value(z_t).shape().to_vec();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != ih || shape[3] != iw {
            return Err(DiffusionError::Shape(format!(
                "z_t shape {shape:?}, model expects [N,1,{ih},{iw}]"
            )));
        }
        if t.len() != shape[0] {
            return Err(DiffusionError::Shape(format!(
                "{} times for batch of {}",
                t.len(),
                shape[0]
            )));
        }
        if cond_feats.len() != self.config.levels() {
            return Err(DiffusionError::Shape(format!(
                "{} condition levels, model has {}",
                cond_feats.len(),
                self.config.levels()
            )));
        }
        let temb = g.constant(time_embedding(t, self.config.time_dim));
        let groups = self.config.groups;

        let mut h = conv(g, p, self.stem, z_t)?;
        let mut skips = Vec::with_capacity(self.config.levels());
        for level in &self.enc {
            for r in &level.blocks {
                h = res_forward(g, p, r, h, temb, groups)?;
            }
            skips.push(h);
            if let Some(down) = &level.down {
                h = g.avg_pool2d(h, 2)?;
                h = conv(g, p, *down, h)?;
            }
        }
        h = res_forward(g, p, &self.mid, h, temb, groups)?;

        for (i, level) in self.dec.iter().enumerate() {
            let l = self.config.levels() - 1 - i;
            let joined = g.concat(&[h, skips[l], cond_feats[l]], 1)?;
            h = conv(g, p, level.fuse, joined)?;
            for r in &level.blocks {
                h = res_forward(g, p, r, h, temb, groups)?;
            }
            if let Some(up) = &level.up {
                h = g.upsample_nearest(h, 2)?;
                h = conv(g, p, *up, h)?;
            }
        }

        let c_hat = head(g, p, self.head_c, h)?;
        let eps_hat = head(g, p, self.head_eps, h)?;
        Ok((c_hat, eps_hat))
    }
}

fn conv(g: &mut Graph, p: &[Var], cp: ConvP, x: Var) -> Result<Var> {
    let y = g.conv2d(x, p[cp.w], 1, 1)?;
    Ok(g.add_bias(y, p[cp.b])?)
}

fn res_forward(g: &mut Graph, p: &[Var], r: &ResP, x: Var, temb: Var, groups: usize) -> Result<Var> {
    let mut y = g.group_norm(x, p[r.n1.gamma], p[r.n1.beta], groups)?;
    y = g.silu(y);
    y = conv(g, p, r.c1, y)?;
    let proj = g.matmul(temb, p[r.t.w])?;
    let proj = g.add_bias(proj, p[r.t.b])?;
    y = g.add_channelwise(y, proj)?;
    y = g.group_norm(y, p[r.n2.gamma], p[r.n2.beta], groups)?;
    y = g.silu(y);
    y = conv(g, p, r.c2, y)?;
    Ok(g.add(x, y)?)
}

fn head(g: &mut Graph, p: &[Var], (a, b): (ConvP, ConvP), h: Var) -> Result<Var> {
    let y = conv(g, p, a, h)?;
    let y = g.silu(y);
    conv(g, p, b, y)
}

/// Sinusoidal embedding of per-sample times into [N, dim]: geometric
/// frequencies from 1 to 1000 over sin/cos halves.
pub(crate) fn time_embedding(t: &[f64], dim: usize) -> Tensor {
    let half = dim / 2;
    let denom = (half.saturating_sub(1)).max(1) as f64;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &tv in t {
        for j in 0..half {
            let freq = 1000f64.powf(j as f64 / denom);
            data.push((freq * tv).sin());
        }
        for j in 0..half {
            let freq = 1000f64.powf(j as f64 / denom);
            data.push((freq * tv).cos());
        }
    }
    Tensor::from_vec(vec![t.len(), dim], data).expect("length consistent")
}
