use crate::error::{Result, TensorError};
use crate::linalg::{col2im, conv_out_dim, im2col, matmul_nn_acc, matmul_nt_acc, matmul_tn_acc};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    /// Broadcast a `[C]` bias over axis 1 of the left operand.
    AddBias(Var, Var),
    /// Broadcast a `[N, C]` tensor over the spatial axes of a `[N, C, H, W]` operand.
    AddChannelwise(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
    },
    AvgPool2d {
        x: Var,
        factor: usize,
    },
    UpsampleNearest {
        x: Var,
        factor: usize,
    },
    Relu(Var),
    Silu(Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        #[allow(dead_code)]
        eps: f64,
        /// (mean, inv_std) per (sample, group), saved by the forward pass.
        saved: Vec<(f64, f64)>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reshape(Var),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    MseBetween(Var, Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Recorded computation in topological order. Single-writer during forward and
/// backward; separate graphs are independent and may live on separate threads.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call w.r.t. `v`, if one was populated.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_requires(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::from_vec(va.shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let shape = va.shape().to_vec();
        if vb.shape().len() != 1 || shape.len() < 2 || shape[1] != vb.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: shape,
                right: vb.shape().to_vec(),
            });
        }
        let c = vb.shape()[0];
        let inner: usize = shape[2..].iter().product();
        let mut data = va.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += vb.data()[(i / inner) % c];
        }
        let out = Tensor::from_vec(shape, data)?;
        let rg = self.any_requires(&[a, bias]);
        Ok(self.push(out, rg, Op::AddBias(a, bias)))
    }

    pub fn add_channelwise(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let shape = va.shape().to_vec();
        if shape.len() != 4
            || vb.shape().len() != 2
            || vb.shape()[0] != shape[0]
            || vb.shape()[1] != shape[1]
        {
            return Err(TensorError::ShapeMismatch {
                op: "add_channelwise",
                left: shape,
                right: vb.shape().to_vec(),
            });
        }
        let hw = shape[2] * shape[3];
        let mut data = va.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += vb.data()[i / hw];
        }
        let out = Tensor::from_vec(shape, data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(out, rg, Op::AddChannelwise(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_vec(va.shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.nodes[a.0].value.map(|v| v * k);
        let rg = self.nodes[a.0].requires_grad;
        self.push(out, rg, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(|v| v.max(0.0));
        let rg = self.nodes[a.0].requires_grad;
        self.push(out, rg, Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(|v| v * sigmoid(v));
        let rg = self.nodes[a.0].requires_grad;
        self.push(out, rg, Op::Silu(a))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        matmul_nn_acc(m, k, n, va.data(), vb.data(), &mut data);
        let out = Tensor::from_vec(vec![m, n], data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(out, rg, Op::Matmul(a, b)))
    }

    /// 2-D convolution, NCHW input and `[C_out, C_in, kh, kw]` weight.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let (vx, vw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (sx, sw) = (vx.shape(), vw.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                left: sx.to_vec(),
                right: sw.to_vec(),
            });
        }
        let (n, cin, h, wid) = (sx[0], sx[1], sx[2], sx[3]);
        let (cout, kh, kw) = (sw[0], sw[2], sw[3]);
        let oh = conv_out_dim(h, kh, stride, padding).ok_or_else(|| TensorError::InvalidShape {
            op: "conv2d",
            shape: sx.to_vec(),
            reason: format!("kernel {kh}x{kw} too large for padded input"),
        })?;
        let ow = conv_out_dim(wid, kw, stride, padding).unwrap();
        let ckk = cin * kh * kw;
        let mut out = vec![0.0; n * cout * oh * ow];
        let mut col = vec![0.0; ckk * oh * ow];
        for s in 0..n {
            im2col(
                &vx.data()[s * cin * h * wid..(s + 1) * cin * h * wid],
                cin,
                h,
                wid,
                kh,
                kw,
                stride,
                padding,
                &mut col,
            );
            matmul_nn_acc(
                cout,
                ckk,
                oh * ow,
                vw.data(),
                &col,
                &mut out[s * cout * oh * ow..(s + 1) * cout * oh * ow],
            );
        }
        let out = Tensor::from_vec(vec![n, cout, oh, ow], out)?;
        let rg = self.any_requires(&[x, w]);
        Ok(self.push(
            out,
            rg,
            Op::Conv2d {
                x,
                w,
                stride,
                padding,
            },
        ))
    }

    /// Transposed 2-D convolution, `[C_in, C_out, kh, kw]` weight; the adjoint
    /// of `conv2d` with the same stride and padding.
    pub fn transposed_conv2d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (vx, vw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (sx, sw) = (vx.shape(), vw.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[0] {
            return Err(TensorError::ShapeMismatch {
                op: "transposed_conv2d",
                left: sx.to_vec(),
                right: sw.to_vec(),
            });
        }
        let (n, cin, h, wid) = (sx[0], sx[1], sx[2], sx[3]);
        let (cout, kh, kw) = (sw[1], sw[2], sw[3]);
        let oh = (h - 1) * stride + kh;
        let ow = (wid - 1) * stride + kw;
        if oh < 2 * padding || ow < 2 * padding {
            return Err(TensorError::InvalidShape {
                op: "transposed_conv2d",
                shape: sx.to_vec(),
                reason: "padding larger than produced output".into(),
            });
        }
        let (oh, ow) = (oh - 2 * padding, ow - 2 * padding);
        let ckk = cout * kh * kw;
        let mut out = vec![0.0; n * cout * oh * ow];
        let mut col = vec![0.0; ckk * h * wid];
        for s in 0..n {
            col.fill(0.0);
            matmul_tn_acc(
                ckk,
                cin,
                h * wid,
                vw.data(),
                &vx.data()[s * cin * h * wid..(s + 1) * cin * h * wid],
                &mut col,
            );
            col2im(
                &col,
                cout,
                oh,
                ow,
                kh,
                kw,
                stride,
                padding,
                &mut out[s * cout * oh * ow..(s + 1) * cout * oh * ow],
            );
        }
        let out = Tensor::from_vec(vec![n, cout, oh, ow], out)?;
        let rg = self.any_requires(&[x, w]);
        Ok(self.push(
            out,
            rg,
            Op::ConvTranspose2d {
                x,
                w,
                stride,
                padding,
            },
        ))
    }

    pub fn avg_pool2d(&mut self, x: Var, factor: usize) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let sx = vx.shape();
        if sx.len() != 4 || factor == 0 || sx[2] % factor != 0 || sx[3] % factor != 0 {
            return Err(TensorError::InvalidShape {
                op: "avg_pool2d",
                shape: sx.to_vec(),
                reason: format!("factor {factor} must divide the spatial dims"),
            });
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (oh, ow) = (h / factor, w / factor);
        let inv = 1.0 / (factor * factor) as f64;
        let mut out = vec![0.0; n * c * oh * ow];
        for nc in 0..n * c {
            let src = &vx.data()[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for or in 0..oh {
                for oc in 0..ow {
                    let mut acc = 0.0;
                    for dr in 0..factor {
                        for dc in 0..factor {
                            acc += src[(or * factor + dr) * w + oc * factor + dc];
                        }
                    }
                    dst[or * ow + oc] = acc * inv;
                }
            }
        }
        let out = Tensor::from_vec(vec![n, c, oh, ow], out)?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out, rg, Op::AvgPool2d { x, factor }))
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let sx = vx.shape();
        if sx.len() != 4 || factor == 0 {
            return Err(TensorError::InvalidShape {
                op: "upsample_nearest",
                shape: sx.to_vec(),
                reason: "expects NCHW input and positive factor".into(),
            });
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (oh, ow) = (h * factor, w * factor);
        let mut out = vec![0.0; n * c * oh * ow];
        for nc in 0..n * c {
            let src = &vx.data()[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for r in 0..oh {
                for cc in 0..ow {
                    dst[r * ow + cc] = src[(r / factor) * w + cc / factor];
                }
            }
        }
        let out = Tensor::from_vec(vec![n, c, oh, ow], out)?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out, rg, Op::UpsampleNearest { x, factor }))
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let eps = 1e-5;
        let vx = &self.nodes[x.0].value;
        let sx = vx.shape().to_vec();
        let (vg, vb) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        if sx.len() != 4 || groups == 0 || sx[1] % groups != 0 {
            return Err(TensorError::InvalidShape {
                op: "group_norm",
                shape: sx,
                reason: format!("groups {groups} must divide the channel count"),
            });
        }
        if vg.shape() != [sx[1]] || vb.shape() != [sx[1]] {
            return Err(TensorError::ShapeMismatch {
                op: "group_norm",
                left: sx,
                right: vg.shape().to_vec(),
            });
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let cg = c / groups;
        let group_len = cg * h * w;
        let mut out = vec![0.0; n * c * h * w];
        let mut saved = Vec::with_capacity(n * groups);
        for s in 0..n {
            for g in 0..groups {
                let base = s * c * h * w + g * group_len;
                let chunk = &vx.data()[base..base + group_len];
                let mean = chunk.iter().sum::<f64>() / group_len as f64;
                let var =
                    chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / group_len as f64;
                let inv_std = 1.0 / (var + eps).sqrt();
                saved.push((mean, inv_std));
                for (i, &v) in chunk.iter().enumerate() {
                    let ch = g * cg + i / (h * w);
                    out[base + i] = (v - mean) * inv_std * vg.data()[ch] + vb.data()[ch];
                }
            }
        }
        let out = Tensor::from_vec(vec![n, c, h, w], out)?;
        let rg = self.any_requires(&[x, gamma, beta]);
        Ok(self.push(
            out,
            rg,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                eps,
                saved,
            },
        ))
    }

    // ---- shape ----

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: vec![],
                reason: "needs at least one input".into(),
            });
        }
        let first = self.nodes[inputs[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: first,
                reason: format!("axis {axis} out of range"),
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for v in inputs {
            let s = self.nodes[v.0].value.shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total_axis = out_shape[axis];
        let mut data = vec![0.0; outer * total_axis * inner];
        let mut offset = 0usize;
        for v in inputs {
            let val = &self.nodes[v.0].value;
            let ax = val.shape()[axis];
            for o in 0..outer {
                let src = &val.data()[o * ax * inner..(o + 1) * ax * inner];
                let dst_base = (o * total_axis + offset) * inner;
                data[dst_base..dst_base + ax * inner].copy_from_slice(src);
            }
            offset += ax;
        }
        let out = Tensor::from_vec(out_shape, data)?;
        let rg = self.any_requires(inputs);
        Ok(self.push(
            out,
            rg,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let numel: usize = shape.iter().product();
        if numel != vx.numel() {
            return Err(TensorError::InvalidShape {
                op: "reshape",
                shape: shape.to_vec(),
                reason: format!("element count {} != {}", numel, vx.numel()),
            });
        }
        let out = Tensor::from_vec(shape.to_vec(), vx.data().to_vec())?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out, rg, Op::Reshape(x)))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let s = vx.shape().to_vec();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            return Err(TensorError::InvalidShape {
                op: "slice",
                shape: s,
                reason: format!("axis {axis}, start {start}, len {len} out of bounds"),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let ax = s[axis];
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = &vx.data()[(o * ax + start) * inner..(o * ax + start + len) * inner];
            data[o * len * inner..(o + 1) * len * inner].copy_from_slice(src);
        }
        let out = Tensor::from_vec(out_shape, data)?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            out,
            rg,
            Op::Slice {
                x,
                axis,
                start,
                len,
            },
        ))
    }

    // ---- reductions ----

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(total), rg, Op::Sum(x))
    }

    /// Mean squared difference, reduced to a scalar.
    pub fn mse_between(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mse_between",
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let n = va.numel() as f64;
        let total: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(Tensor::scalar(total / n), rg, Op::MseBetween(a, b)))
    }

    // ---- backward ----

    /// Populates `grad` for every node with `requires_grad` reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        for node in self.nodes.iter_mut() {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad || self.nodes[idx].grad.is_none() {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            let is_leaf = matches!(op, Op::Leaf);
            let grad_out = if is_leaf {
                continue;
            } else {
                // interior grads are consumed once all children (higher indices)
                // have been processed, which reverse order guarantees
                self.nodes[idx].grad.take().unwrap()
            };
            self.propagate(idx, &op, &grad_out)?;
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contrib: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let numel = self.nodes[v.0].value.numel();
        let g = self.nodes[v.0].grad.get_or_insert_with(|| vec![0.0; numel]);
        for (gi, ci) in g.iter_mut().zip(contrib) {
            *gi += ci;
        }
    }

    fn propagate(&mut self, idx: usize, op: &Op, g: &[f64]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::AddBias(a, bias) => {
                self.accumulate(*a, g);
                if self.nodes[bias.0].requires_grad {
                    let shape = self.nodes[a.0].value.shape();
                    let c = shape[1];
                    let inner: usize = shape[2..].iter().product();
                    let mut gb = vec![0.0; c];
                    for (i, &gi) in g.iter().enumerate() {
                        gb[(i / inner) % c] += gi;
                    }
                    self.accumulate(*bias, &gb);
                }
            }
            Op::AddChannelwise(a, b) => {
                self.accumulate(*a, g);
                if self.nodes[b.0].requires_grad {
                    let shape = self.nodes[a.0].value.shape();
                    let hw = shape[2] * shape[3];
                    let mut gb = vec![0.0; shape[0] * shape[1]];
                    for (i, &gi) in g.iter().enumerate() {
                        gb[i / hw] += gi;
                    }
                    self.accumulate(*b, &gb);
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let vb = self.nodes[b.0].value.data();
                    let ga: Vec<f64> = g.iter().zip(vb).map(|(gi, y)| gi * y).collect();
                    self.accumulate(*a, &ga);
                }
                if self.nodes[b.0].requires_grad {
                    let va = self.nodes[a.0].value.data();
                    let gb: Vec<f64> = g.iter().zip(va).map(|(gi, x)| gi * x).collect();
                    self.accumulate(*b, &gb);
                }
            }
            Op::Scale(a, k) => {
                let ga: Vec<f64> = g.iter().map(|gi| gi * k).collect();
                self.accumulate(*a, &ga);
            }
            Op::Relu(a) => {
                let va = self.nodes[a.0].value.data();
                let ga: Vec<f64> = g
                    .iter()
                    .zip(va)
                    .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accumulate(*a, &ga);
            }
            Op::Silu(a) => {
                let va = self.nodes[a.0].value.data();
                let ga: Vec<f64> = g
                    .iter()
                    .zip(va)
                    .map(|(gi, &x)| {
                        let s = sigmoid(x);
                        gi * (s + x * s * (1.0 - s))
                    })
                    .collect();
                self.accumulate(*a, &ga);
            }
            Op::Matmul(a, b) => {
                let sa = self.nodes[a.0].value.shape().to_vec();
                let sb = self.nodes[b.0].value.shape().to_vec();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.nodes[a.0].requires_grad {
                    // dA = dC * B^T
                    let mut ga = vec![0.0; m * k];
                    matmul_nt_acc(m, n, k, g, self.nodes[b.0].value.data(), &mut ga);
                    self.accumulate(*a, &ga);
                }
                if self.nodes[b.0].requires_grad {
                    // dB = A^T * dC
                    let mut gb = vec![0.0; k * n];
                    matmul_tn_acc(k, m, n, self.nodes[a.0].value.data(), g, &mut gb);
                    self.accumulate(*b, &gb);
                }
            }
            Op::Conv2d {
                x,
                w,
                stride,
                padding,
            } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let sw = self.nodes[w.0].value.shape().to_vec();
                let (n, cin, h, wid) = (sx[0], sx[1], sx[2], sx[3]);
                let (cout, kh, kw) = (sw[0], sw[2], sw[3]);
                let oh = conv_out_dim(h, kh, *stride, *padding).unwrap();
                let ow = conv_out_dim(wid, kw, *stride, *padding).unwrap();
                let ckk = cin * kh * kw;
                let need_x = self.nodes[x.0].requires_grad;
                let need_w = self.nodes[w.0].requires_grad;
                let mut gx = if need_x { vec![0.0; n * cin * h * wid] } else { vec![] };
                let mut gw = if need_w { vec![0.0; cout * ckk] } else { vec![] };
                let mut col = vec![0.0; ckk * oh * ow];
                let mut dcol = vec![0.0; ckk * oh * ow];
                for s in 0..n {
                    let gy = &g[s * cout * oh * ow..(s + 1) * cout * oh * ow];
                    if need_w {
                        im2col(
                            &self.nodes[x.0].value.data()[s * cin * h * wid..(s + 1) * cin * h * wid],
                            cin,
                            h,
                            wid,
                            kh,
                            kw,
                            *stride,
                            *padding,
                            &mut col,
                        );
                        matmul_nt_acc(cout, oh * ow, ckk, gy, &col, &mut gw);
                    }
                    if need_x {
                        dcol.fill(0.0);
                        matmul_tn_acc(
                            ckk,
                            cout,
                            oh * ow,
                            self.nodes[w.0].value.data(),
                            gy,
                            &mut dcol,
                        );
                        col2im(
                            &dcol,
                            cin,
                            h,
                            wid,
                            kh,
                            kw,
                            *stride,
                            *padding,
                            &mut gx[s * cin * h * wid..(s + 1) * cin * h * wid],
                        );
                    }
                }
                if need_x {
                    self.accumulate(*x, &gx);
                }
                if need_w {
                    self.accumulate(*w, &gw);
                }
            }
            Op::ConvTranspose2d {
                x,
                w,
                stride,
                padding,
            } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let sw = self.nodes[w.0].value.shape().to_vec();
                let (n, cin, h, wid) = (sx[0], sx[1], sx[2], sx[3]);
                let (cout, kh, kw) = (sw[1], sw[2], sw[3]);
                let oh = (h - 1) * stride + kh - 2 * padding;
                let ow = (wid - 1) * stride + kw - 2 * padding;
                let ckk = cout * kh * kw;
                let need_x = self.nodes[x.0].requires_grad;
                let need_w = self.nodes[w.0].requires_grad;
                let mut gx = if need_x { vec![0.0; n * cin * h * wid] } else { vec![] };
                let mut gw = if need_w { vec![0.0; cin * ckk] } else { vec![] };
                let mut col = vec![0.0; ckk * h * wid];
                for s in 0..n {
                    let gy = &g[s * cout * oh * ow..(s + 1) * cout * oh * ow];
                    im2col(gy, cout, oh, ow, kh, kw, *stride, *padding, &mut col);
                    if need_x {
                        // dU = W_mat * im2col(dV)
                        matmul_nn_acc(
                            cin,
                            ckk,
                            h * wid,
                            self.nodes[w.0].value.data(),
                            &col,
                            &mut gx[s * cin * h * wid..(s + 1) * cin * h * wid],
                        );
                    }
                    if need_w {
                        // dW = U * im2col(dV)^T
                        matmul_nt_acc(
                            cin,
                            h * wid,
                            ckk,
                            &self.nodes[x.0].value.data()[s * cin * h * wid..(s + 1) * cin * h * wid],
                            &col,
                            &mut gw,
                        );
                    }
                }
                if need_x {
                    self.accumulate(*x, &gx);
                }
                if need_w {
                    self.accumulate(*w, &gw);
                }
            }
            Op::AvgPool2d { x, factor } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
                let (oh, ow) = (h / factor, w / factor);
                let inv = 1.0 / (factor * factor) as f64;
                let mut gx = vec![0.0; n * c * h * w];
                for nc in 0..n * c {
                    let gsrc = &g[nc * oh * ow..(nc + 1) * oh * ow];
                    let gdst = &mut gx[nc * h * w..(nc + 1) * h * w];
                    for or in 0..oh {
                        for oc in 0..ow {
                            let gi = gsrc[or * ow + oc] * inv;
                            for dr in 0..*factor {
                                for dc in 0..*factor {
                                    gdst[(or * factor + dr) * w + oc * factor + dc] += gi;
                                }
                            }
                        }
                    }
                }
                self.accumulate(*x, &gx);
            }
            Op::UpsampleNearest { x, factor } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
                let (oh, ow) = (h * factor, w * factor);
                let mut gx = vec![0.0; n * c * h * w];
                for nc in 0..n * c {
                    let gsrc = &g[nc * oh * ow..(nc + 1) * oh * ow];
                    let gdst = &mut gx[nc * h * w..(nc + 1) * h * w];
                    for r in 0..oh {
                        for cc in 0..ow {
                            gdst[(r / factor) * w + cc / factor] += gsrc[r * ow + cc];
                        }
                    }
                }
                self.accumulate(*x, &gx);
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                eps: _,
                saved,
            } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
                let cg = c / groups;
                let group_len = cg * h * w;
                let vx = self.nodes[x.0].value.data();
                let vg = self.nodes[gamma.0].value.data();
                let need_x = self.nodes[x.0].requires_grad;
                let need_g = self.nodes[gamma.0].requires_grad;
                let need_b = self.nodes[beta.0].requires_grad;
                let mut gx = if need_x { vec![0.0; vx.len()] } else { vec![] };
                let mut gg = if need_g { vec![0.0; c] } else { vec![] };
                let mut gb = if need_b { vec![0.0; c] } else { vec![] };
                for s in 0..n {
                    for gr in 0..*groups {
                        let base = s * c * h * w + gr * group_len;
                        let (mean, inv_std) = saved[s * groups + gr];
                        let xs = &vx[base..base + group_len];
                        let gs = &g[base..base + group_len];
                        // normalized values and dL/dy_hat
                        let mut sum_dyh = 0.0;
                        let mut sum_dyh_yh = 0.0;
                        for i in 0..group_len {
                            let ch = gr * cg + i / (h * w);
                            let yh = (xs[i] - mean) * inv_std;
                            let dyh = gs[i] * vg[ch];
                            sum_dyh += dyh;
                            sum_dyh_yh += dyh * yh;
                            if need_g {
                                gg[ch] += gs[i] * yh;
                            }
                            if need_b {
                                gb[ch] += gs[i];
                            }
                        }
                        if need_x {
                            let m = group_len as f64;
                            for i in 0..group_len {
                                let ch = gr * cg + i / (h * w);
                                let yh = (xs[i] - mean) * inv_std;
                                let dyh = gs[i] * vg[ch];
                                gx[base + i] = inv_std
                                    * (dyh - sum_dyh / m - yh * sum_dyh_yh / m);
                            }
                        }
                    }
                }
                if need_x {
                    self.accumulate(*x, &gx);
                }
                if need_g {
                    self.accumulate(*gamma, &gg);
                }
                if need_b {
                    self.accumulate(*beta, &gb);
                }
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.nodes[idx].value.shape().to_vec();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let total_axis = out_shape[*axis];
                let mut offset = 0usize;
                for v in inputs {
                    let ax = self.nodes[v.0].value.shape()[*axis];
                    if self.nodes[v.0].requires_grad {
                        let mut gv = vec![0.0; outer * ax * inner];
                        for o in 0..outer {
                            let src_base = (o * total_axis + offset) * inner;
                            gv[o * ax * inner..(o + 1) * ax * inner]
                                .copy_from_slice(&g[src_base..src_base + ax * inner]);
                        }
                        self.accumulate(*v, &gv);
                    }
                    offset += ax;
                }
            }
            Op::Reshape(x) => {
                self.accumulate(*x, g);
            }
            Op::Slice {
                x,
                axis,
                start,
                len,
            } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let outer: usize = sx[..*axis].iter().product();
                let inner: usize = sx[*axis + 1..].iter().product();
                let ax = sx[*axis];
                let mut gx = vec![0.0; self.nodes[x.0].value.numel()];
                for o in 0..outer {
                    let dst_base = (o * ax + start) * inner;
                    gx[dst_base..dst_base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                self.accumulate(*x, &gx);
            }
            Op::Sum(x) => {
                let gi = g[0];
                let gx = vec![gi; self.nodes[x.0].value.numel()];
                self.accumulate(*x, &gx);
            }
            Op::MseBetween(a, b) => {
                let gi = g[0];
                let scale = 2.0 * gi / self.nodes[a.0].value.numel() as f64;
                let diff: Vec<f64> = {
                    let va = self.nodes[a.0].value.data();
                    let vb = self.nodes[b.0].value.data();
                    va.iter().zip(vb).map(|(x, y)| scale * (x - y)).collect()
                };
                if self.nodes[a.0].requires_grad {
                    self.accumulate(*a, &diff);
                }
                if self.nodes[b.0].requires_grad {
                    let gb: Vec<f64> = diff.iter().map(|d| -d).collect();
                    self.accumulate(*b, &gb);
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
