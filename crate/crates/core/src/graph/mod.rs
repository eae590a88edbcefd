//! A small reverse-mode autograd tape over [`Tensor`]s.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward and
//! backward pass. Parameters enter the tape at most once each, so a shared
//! parameter used by two networks accumulates gradient from both uses.
//! Parameters not marked trainable enter as constants: nothing is propagated
//! into them and they receive no gradient. This is how a training phase
//! freezes the networks it does not update.

mod conv;

pub use conv::ConvGeom;
pub(crate) use conv::Lowering;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use conv::{from_channel_major, to_channel_major};

use crate::error::{Error, Result};
use crate::gemm::{gemm, MatRef};
use crate::math;
use crate::metrics::{mmd_unbiased, mmd_unbiased_grad, KernelSpec};
use crate::nn::{BufferId, ParamId, ParamStore};
use crate::objectives::LOG_FLOOR;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Largest im2col buffer (in scalars) kept on the tape for the backward pass.
const COL_CACHE_LIMIT: usize = 1 << 24;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// BatchNorm behaviour for a pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and record them for the running averages.
    Train,
    /// Normalize with the stored running statistics.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

/// Batch statistics observed by a training-mode BatchNorm.
#[derive(Clone, Debug, PartialEq)]
pub struct StatUpdate {
    pub buffer: BufferId,
    pub mean: Vec<f64>,
    /// Unbiased variance.
    pub var: Vec<f64>,
}

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, cols: Option<Vec<f64>> },
    Deconv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Linear { x: Var, w: Var, b: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNormEval { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, inv_std: Vec<f64> },
    Act { x: Var, act: Activation },
    Softmax { x: Var },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Reshape { x: Var },
    ConcatBatch { parts: Vec<Var> },
    AppendCoords { x: Var },
    SelectColumn { x: Var, col: usize },
    L1Mean { a: Var, b: Var },
    NegLogMean { p: Var, complement: bool },
    Nll { probs: Var, labels: Vec<usize> },
    Mmd { x: Var, y: Var, spec: KernelSpec },
    WeightedSum { parts: Vec<(Var, f64)> },
    Dot { x: Var, c: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to the trainable parameters.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(id.index()).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, g)| g.is_finite())
    }
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    trainable: Vec<bool>,
    mode: Mode,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    stat_updates: Vec<StatUpdate>,
    fingerprint: Option<u64>,
}

#[inline]
fn mix(h: &mut u64, v: u64) {
    *h ^= v;
    *h = h.wrapping_mul(0x0000_0100_0000_01b3);
}

impl<'s> Graph<'s> {
    /// A tape on which every parameter is a constant.
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Graph {
            store,
            trainable: vec![false; store.len()],
            mode,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            stat_updates: Vec::new(),
            fingerprint: None,
        }
    }

    /// A tape on which exactly the parameters in `ids` receive gradients.
    pub fn with_trainable(store: &'s ParamStore, mode: Mode, ids: &[ParamId]) -> Self {
        let mut g = Self::new(store, mode);
        for id in ids {
            g.trainable[id.index()] = true;
        }
        g
    }

    /// Records the piecewise-linear region (ReLU masks, pooling winners, L1
    /// signs, active log clamps) visited by the forward pass.
    pub fn track_fingerprint(&mut self) {
        self.fingerprint = Some(0xcbf2_9ce4_8422_2325);
    }

    pub fn fingerprint(&self) -> Option<u64> {
        self.fingerprint
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate> {
        core::mem::take(&mut self.stat_updates)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn stamp(&mut self, bits: impl Iterator<Item = u64>) {
        if let Some(h) = self.fingerprint.as_mut() {
            for b in bits {
                mix(h, b);
            }
        }
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A parameter; trainable parameters become gradient leaves.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(self.store.value(id).clone(), Op::Leaf, self.trainable[id.index()]);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (n, c, h, wd) = self.value(x).dims4()?;
        let wt = self.value(w);
        let cout = wt.shape()[0];
        if wt.shape() != [cout, c, geom.kernel, geom.kernel] {
            return Err(Error::Shape {
                context: "conv2d weight",
                expected: vec![cout, c, geom.kernel, geom.kernel],
                actual: wt.shape().to_vec(),
            });
        }
        let (oh, ow) = geom
            .conv_out(h, wd)
            .ok_or_else(|| Error::domain(format!("conv kernel {} does not fit {h}x{wd}", geom.kernel)))?;
        let low = Lowering { n, c, h, w: wd, oh, ow, geom };
        let cols = low.im2col(self.value(x).data());
        let mut out = vec![0.0; cout * low.cols()];
        gemm(MatRef::new(wt.data(), cout, low.rows()), MatRef::new(&cols, low.rows(), low.cols()), &mut out, 0.0);
        let mut y = from_channel_major(&out, n, cout, oh * ow);
        if let Some(b) = b {
            add_channel_bias(&mut y, self.value(b).data(), oh * ow);
        }
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        let value = Tensor::from_vec(&[n, cout, oh, ow], y)?;
        // kept for the weight gradient unless large
        let cols = (self.requires_grad(w) && cols.len() <= COL_CACHE_LIMIT).then_some(cols);
        Ok(self.push(value, Op::Conv { x, w, b, geom, cols }, rg))
    }

    /// Transposed convolution; the weight is laid out `[c_in, c_out, k, k]`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let wt = self.value(w);
        if wt.rank() != 4 || wt.shape()[0] != cin || wt.shape()[2] != geom.kernel || wt.shape()[3] != geom.kernel {
            return Err(Error::Shape {
                context: "deconv2d weight",
                expected: vec![cin, 0, geom.kernel, geom.kernel],
                actual: wt.shape().to_vec(),
            });
        }
        let cout = wt.shape()[1];
        let (oh, ow) =
            geom.deconv_out(h, wd).ok_or_else(|| Error::domain(format!("deconv geometry invalid for {h}x{wd}")))?;
        let low = Lowering { n, c: cout, h: oh, w: ow, oh: h, ow: wd, geom };
        let xp = to_channel_major(self.value(x).data(), n, cin, h * wd);
        let mut cols = vec![0.0; low.rows() * low.cols()];
        gemm(MatRef::new(wt.data(), cin, low.rows()).t(), MatRef::new(&xp, cin, low.cols()), &mut cols, 0.0);
        let mut y = low.col2im(&cols);
        if let Some(b) = b {
            add_channel_bias(&mut y, self.value(b).data(), oh * ow);
        }
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        let value = Tensor::from_vec(&[n, cout, oh, ow], y)?;
        Ok(self.push(value, Op::Deconv { x, w, b, geom }, rg))
    }

    /// `y = x W^T + b` with `x: [n, in]`, `W: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        if xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[1] {
            return Err(Error::Shape {
                context: "linear input",
                expected: vec![xv.batch(), wv.shape().get(1).copied().unwrap_or(0)],
                actual: xv.shape().to_vec(),
            });
        }
        let (n, din, dout) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
        let mut y = vec![0.0; n * dout];
        for row in y.chunks_mut(dout) {
            row.copy_from_slice(self.value(b).data());
        }
        gemm(MatRef::new(xv.data(), n, din), MatRef::new(wv.data(), dout, din).t(), &mut y, 1.0);
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::from_vec(&[n, dout], y)?, Op::Linear { x, w, b }, rg))
    }

    /// Per-channel normalization over batch and spatial positions.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, stats: BufferId) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, p) = match *xv.shape() {
            [n, c] => (n, c, 1),
            [n, c, h, w] => (n, c, h * w),
            _ => return Err(Error::domain("batch_norm expects rank 2 or 4")),
        };
        let g = self.value(gamma).data().to_vec();
        let bt = self.value(beta).data().to_vec();
        let rg = self.rg(&[x, gamma, beta]);
        match self.mode {
            Mode::Train => {
                let m = (n * p) as f64;
                if n * p < 2 {
                    return Err(Error::domain("training-mode batch_norm needs at least 2 values per channel"));
                }
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for b in 0..n {
                    for ci in 0..c {
                        for &v in &xv.data()[(b * c + ci) * p..][..p] {
                            mean[ci] += v;
                        }
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m);
                for b in 0..n {
                    for ci in 0..c {
                        for &v in &xv.data()[(b * c + ci) * p..][..p] {
                            let d = v - mean[ci];
                            var[ci] += d * d;
                        }
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect();
                let mut xhat = vec![0.0; xv.len()];
                let mut y = vec![0.0; xv.len()];
                for b in 0..n {
                    for ci in 0..c {
                        let base = (b * c + ci) * p;
                        for k in 0..p {
                            let h = (xv.data()[base + k] - mean[ci]) * inv_std[ci];
                            xhat[base + k] = h;
                            y[base + k] = g[ci] * h + bt[ci];
                        }
                    }
                }
                let shape = xv.shape().to_vec();
                self.stat_updates.push(StatUpdate {
                    buffer: stats,
                    mean,
                    var: var.iter().map(|v| v * m / (m - 1.0)).collect(),
                });
                Ok(self.push(Tensor::from_vec(&shape, y)?, Op::BatchNorm { x, gamma, beta, xhat, inv_std }, rg))
            }
            Mode::Eval => {
                let rs = self.store.stats(stats);
                let mean = rs.mean.clone();
                let inv_std: Vec<f64> = rs.var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect();
                let mut y = xv.data().to_vec();
                for b in 0..n {
                    for ci in 0..c {
                        for v in &mut y[(b * c + ci) * p..][..p] {
                            *v = g[ci] * (*v - mean[ci]) * inv_std[ci] + bt[ci];
                        }
                    }
                }
                let shape = xv.shape().to_vec();
                Ok(self.push(Tensor::from_vec(&shape, y)?, Op::BatchNormEval { x, gamma, beta, mean, inv_std }, rg))
            }
        }
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let xv = self.value(x);
        let y = match act {
            Activation::Relu => xv.map(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::LeakyRelu(s) => xv.map(|v| if v > 0.0 { v } else { s * v }),
            Activation::Tanh => xv.map(math::tanh),
            Activation::Sigmoid => xv.map(math::sigmoid),
        };
        if self.fingerprint.is_some() && matches!(act, Activation::Relu | Activation::LeakyRelu(_)) {
            let bits: Vec<u64> = xv.data().iter().map(|&v| (v > 0.0) as u64).collect();
            self.stamp(bits.into_iter());
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Act { x, act }, rg)
    }

    /// Row-wise softmax of a rank-2 tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::domain("softmax expects rank 2"));
        }
        let d = xv.shape()[1];
        let mut y = xv.data().to_vec();
        for row in y.chunks_mut(d) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - m);
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let shape = xv.shape().to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_vec(&shape, y)?, Op::Softmax { x }, rg))
    }

    /// 2x2 max pooling with stride 2 (floor).
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::domain(format!("max_pool2 on {h}x{w} input")));
        }
        let xv = self.value(x).data();
        let mut y = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0u32; y.len()];
        for nc in 0..n * c {
            let src = &xv[nc * h * w..][..h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (2 * oy + dy) * w + 2 * ox + dx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    let o = nc * oh * ow + oy * ow + ox;
                    y[o] = src[best];
                    argmax[o] = best as u32;
                }
            }
        }
        self.stamp(argmax.iter().map(|&a| a as u64));
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_vec(&[n, c, oh, ow], y)?, Op::MaxPool2 { x, argmax }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::Reshape { x }, rg))
    }

    /// Flattens everything after the batch dimension.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let shape = [v.batch(), v.row_len()];
        self.reshape(x, &shape)
    }

    pub fn concat_batch(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let y = Tensor::concat_batch(&tensors)?;
        let rg = self.rg(parts);
        Ok(self.push(y, Op::ConcatBatch { parts: parts.to_vec() }, rg))
    }

    /// Appends normalized x/y coordinate channels to an image batch.
    pub fn append_coords(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).with_coordinate_channels()?;
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::AppendCoords { x }, rg))
    }

    pub fn select_column(&mut self, x: Var, col: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || col >= xv.shape()[1] {
            return Err(Error::domain("select_column out of range"));
        }
        let d = xv.shape()[1];
        let y: Vec<f64> = xv.data().iter().skip(col).step_by(d).copied().collect();
        let n = xv.shape()[0];
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_vec(&[n], y)?, Op::SelectColumn { x, col }, rg))
    }

    /// Mean absolute difference over every element.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                context: "l1_mean",
                expected: av.shape().to_vec(),
                actual: bv.shape().to_vec(),
            });
        }
        let s: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y).abs()).sum();
        if self.fingerprint.is_some() {
            let bits: Vec<u64> = av.data().iter().zip(bv.data()).map(|(x, y)| (x > y) as u64).collect();
            self.stamp(bits.into_iter());
        }
        let value = Tensor::scalar(s / self.value(a).len().max(1) as f64);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::L1Mean { a, b }, rg))
    }

    /// `mean(-ln(max(p, floor)))`, or of `1 - p` when `complement`.
    pub fn neg_log_mean(&mut self, p: Var, complement: bool) -> Result<Var> {
        let pv = self.value(p);
        if pv.is_empty() {
            return Err(Error::domain("neg_log_mean of empty tensor"));
        }
        let mut s = 0.0;
        let mut active = Vec::new();
        for &v in pv.data() {
            let q = if complement { 1.0 - v } else { v };
            active.push((q > LOG_FLOOR) as u64);
            s -= math::ln(q.max(LOG_FLOOR));
        }
        let len = pv.len() as f64;
        self.stamp(active.into_iter());
        let value = Tensor::scalar(s / len);
        let rg = self.rg(&[p]);
        Ok(self.push(value, Op::NegLogMean { p, complement }, rg))
    }

    /// Mean negative log-likelihood of `labels` under row-stochastic `probs`.
    pub fn nll(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let pv = self.value(probs);
        if pv.rank() != 2 || pv.shape()[0] != labels.len() {
            return Err(Error::Shape { context: "nll", expected: vec![labels.len(), 0], actual: pv.shape().to_vec() });
        }
        let k = pv.shape()[1];
        let mut s = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::domain(format!("label {y} outside 0..{k}")));
            }
            s -= math::ln(pv.data()[i * k + y].max(LOG_FLOOR));
        }
        let value = Tensor::scalar(s / labels.len().max(1) as f64);
        let rg = self.rg(&[probs]);
        Ok(self.push(value, Op::Nll { probs, labels: labels.to_vec() }, rg))
    }

    /// Unbiased MMD^2 between the rows of `x` and `y`.
    pub fn mmd(&mut self, x: Var, y: Var, spec: KernelSpec) -> Result<Var> {
        let v = mmd_unbiased(self.value(x), self.value(y), &spec)?;
        let rg = self.rg(&[x, y]);
        Ok(self.push(Tensor::scalar(v), Op::Mmd { x, y, spec }, rg))
    }

    /// `sum_i w_i * x_i` over equally shaped inputs.
    pub fn weighted_sum(&mut self, parts: &[(Var, f64)]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Assembly("weighted_sum parts"))?;
        let mut acc = Tensor::zeros(self.value(first.0).shape());
        for &(v, w) in parts {
            let t = self.value(v);
            if t.shape() != acc.shape() {
                return Err(Error::Shape {
                    context: "weighted_sum",
                    expected: acc.shape().to_vec(),
                    actual: t.shape().to_vec(),
                });
            }
            acc.axpy(w, t);
        }
        let vars: Vec<Var> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&vars);
        Ok(self.push(acc, Op::WeightedSum { parts: parts.to_vec() }, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.weighted_sum(&[(x, c)])
    }

    /// `sum_i x_i * c_i` against a constant tensor of the same shape.
    pub fn dot(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != c.shape() {
            return Err(Error::Shape { context: "dot", expected: xv.shape().to_vec(), actual: c.shape().to_vec() });
        }
        let v: f64 = xv.data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Dot { x, c: c.clone() }, rg))
    }

    /// Reverse sweep from a scalar; returns gradients of trainable parameters.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::domain("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { by_param: vec![None; self.store.len()] });
        }
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
        }
        let mut by_param = vec![None; self.store.len()];
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let Some(v) = var {
                if self.trainable[pid] {
                    by_param[pid] = Some(grads[v.0].take().unwrap_or_else(|| Tensor::zeros(self.value(*v).shape())));
                }
            }
        }
        Ok(Gradients { by_param })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.axpy(1.0, &g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geom, cols } => {
                let (n, c, h, wd) = self.value(*x).dims4()?;
                let (_, cout, oh, ow) = node.value.dims4()?;
                let low = Lowering { n, c, h, w: wd, oh, ow, geom: *geom };
                let gm = to_channel_major(g.data(), n, cout, oh * ow);
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        self.accumulate(grads, *b, Tensor::from_vec(&[cout], row_sums(&gm, cout))?);
                    }
                }
                let need_w = self.requires_grad(*w);
                let need_x = self.requires_grad(*x);
                if need_w {
                    let fresh;
                    let cols = match cols {
                        Some(c) => c,
                        None => {
                            fresh = low.im2col(self.value(*x).data());
                            &fresh
                        }
                    };
                    let mut gw = vec![0.0; cout * low.rows()];
                    gemm(
                        MatRef::new(&gm, cout, low.cols()),
                        MatRef::new(cols, low.rows(), low.cols()).t(),
                        &mut gw,
                        0.0,
                    );
                    self.accumulate(grads, *w, Tensor::from_vec(self.value(*w).shape(), gw)?);
                }
                if need_x {
                    let mut gcols = vec![0.0; low.rows() * low.cols()];
                    gemm(
                        MatRef::new(self.value(*w).data(), cout, low.rows()).t(),
                        MatRef::new(&gm, cout, low.cols()),
                        &mut gcols,
                        0.0,
                    );
                    let gx = low.col2im(&gcols);
                    self.accumulate(grads, *x, Tensor::from_vec(&[n, c, h, wd], gx)?);
                }
            }
            Op::Deconv { x, w, b, geom } => {
                let (n, cin, h, wd) = self.value(*x).dims4()?;
                let (_, cout, oh, ow) = node.value.dims4()?;
                let low = Lowering { n, c: cout, h: oh, w: ow, oh: h, ow: wd, geom: *geom };
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        let gm = to_channel_major(g.data(), n, cout, oh * ow);
                        self.accumulate(grads, *b, Tensor::from_vec(&[cout], row_sums(&gm, cout))?);
                    }
                }
                let gcols = low.im2col(g.data());
                if self.requires_grad(*w) {
                    let xp = to_channel_major(self.value(*x).data(), n, cin, h * wd);
                    let mut gw = vec![0.0; cin * low.rows()];
                    gemm(
                        MatRef::new(&xp, cin, low.cols()),
                        MatRef::new(&gcols, low.rows(), low.cols()).t(),
                        &mut gw,
                        0.0,
                    );
                    self.accumulate(grads, *w, Tensor::from_vec(self.value(*w).shape(), gw)?);
                }
                if self.requires_grad(*x) {
                    let mut gxp = vec![0.0; cin * low.cols()];
                    gemm(
                        MatRef::new(self.value(*w).data(), cin, low.rows()),
                        MatRef::new(&gcols, low.rows(), low.cols()),
                        &mut gxp,
                        0.0,
                    );
                    let gx = from_channel_major(&gxp, n, cin, h * wd);
                    self.accumulate(grads, *x, Tensor::from_vec(&[n, cin, h, wd], gx)?);
                }
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, din, dout) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                if self.requires_grad(*b) {
                    let mut gb = vec![0.0; dout];
                    for row in g.data().chunks(dout) {
                        for (a, v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::from_vec(&[dout], gb)?);
                }
                if self.requires_grad(*w) {
                    let mut gw = vec![0.0; dout * din];
                    gemm(MatRef::new(g.data(), n, dout).t(), MatRef::new(xv.data(), n, din), &mut gw, 0.0);
                    self.accumulate(grads, *w, Tensor::from_vec(&[dout, din], gw)?);
                }
                if self.requires_grad(*x) {
                    let mut gx = vec![0.0; n * din];
                    gemm(MatRef::new(g.data(), n, dout), MatRef::new(wv.data(), dout, din), &mut gx, 0.0);
                    self.accumulate(grads, *x, Tensor::from_vec(&[n, din], gx)?);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let shape = self.value(*x).shape().to_vec();
                let (n, c) = (shape[0], shape[1]);
                let p: usize = shape[2..].iter().product();
                let m = (n * p) as f64;
                let gam = self.value(*gamma).data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for b in 0..n {
                    for ci in 0..c {
                        let base = (b * c + ci) * p;
                        for k in 0..p {
                            sum_g[ci] += g.data()[base + k];
                            sum_gx[ci] += g.data()[base + k] * xhat[base + k];
                        }
                    }
                }
                if self.requires_grad(*beta) {
                    self.accumulate(grads, *beta, Tensor::from_vec(&[c], sum_g.clone())?);
                }
                if self.requires_grad(*gamma) {
                    self.accumulate(grads, *gamma, Tensor::from_vec(&[c], sum_gx.clone())?);
                }
                if self.requires_grad(*x) {
                    let mut gx = vec![0.0; g.len()];
                    for b in 0..n {
                        for ci in 0..c {
                            let base = (b * c + ci) * p;
                            let k0 = gam[ci] * inv_std[ci] / m;
                            for k in 0..p {
                                gx[base + k] = k0 * (m * g.data()[base + k] - sum_g[ci] - xhat[base + k] * sum_gx[ci]);
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::from_vec(&shape, gx)?);
                }
            }
            Op::BatchNormEval { x, gamma, beta, mean, inv_std } => {
                let xv = self.value(*x);
                let shape = xv.shape().to_vec();
                let (n, c) = (shape[0], shape[1]);
                let p: usize = shape[2..].iter().product();
                let gam = self.value(*gamma).data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                let mut gx = vec![0.0; g.len()];
                for b in 0..n {
                    for ci in 0..c {
                        let base = (b * c + ci) * p;
                        for k in 0..p {
                            let gv = g.data()[base + k];
                            sum_g[ci] += gv;
                            sum_gx[ci] += gv * (xv.data()[base + k] - mean[ci]) * inv_std[ci];
                            gx[base + k] = gv * gam[ci] * inv_std[ci];
                        }
                    }
                }
                self.accumulate(grads, *beta, Tensor::from_vec(&[c], sum_g)?);
                self.accumulate(grads, *gamma, Tensor::from_vec(&[c], sum_gx)?);
                self.accumulate(grads, *x, Tensor::from_vec(&shape, gx)?);
            }
            Op::Act { x, act } => {
                let xv = self.value(*x);
                let yv = &node.value;
                let gx: Vec<f64> = match act {
                    Activation::Relu => {
                        g.data().iter().zip(xv.data()).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect()
                    }
                    Activation::LeakyRelu(s) => {
                        g.data().iter().zip(xv.data()).map(|(g, &v)| if v > 0.0 { *g } else { s * g }).collect()
                    }
                    Activation::Tanh => g.data().iter().zip(yv.data()).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    Activation::Sigmoid => g.data().iter().zip(yv.data()).map(|(g, y)| g * y * (1.0 - y)).collect(),
                };
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), gx)?);
            }
            Op::Softmax { x } => {
                let y = &node.value;
                let d = y.shape()[1];
                let mut gx = vec![0.0; y.len()];
                for ((gr, yr), out) in g.data().chunks(d).zip(y.data().chunks(d)).zip(gx.chunks_mut(d)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for k in 0..d {
                        out[k] = yr[k] * (gr[k] - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::from_vec(y.shape(), gx)?);
            }
            Op::MaxPool2 { x, argmax } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                let (_, _, oh, ow) = node.value.dims4()?;
                let mut gx = vec![0.0; n * c * h * w];
                for nc in 0..n * c {
                    for o in 0..oh * ow {
                        let idx = nc * oh * ow + o;
                        gx[nc * h * w + argmax[idx] as usize] += g.data()[idx];
                    }
                }
                self.accumulate(grads, *x, Tensor::from_vec(&[n, c, h, w], gx)?);
            }
            Op::Reshape { x } => {
                let gx = g.clone().reshape(self.value(*x).shape())?;
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatBatch { parts } => {
                let mut start = 0;
                for p in parts {
                    let len = self.value(*p).batch();
                    if self.requires_grad(*p) {
                        self.accumulate(grads, *p, g.slice_batch(start, start + len));
                    }
                    start += len;
                }
            }
            Op::AppendCoords { x } => {
                let c = self.value(*x).shape()[1];
                self.accumulate(grads, *x, g.leading_channels(c)?);
            }
            Op::SelectColumn { x, col } => {
                let xv = self.value(*x);
                let d = xv.shape()[1];
                let mut gx = vec![0.0; xv.len()];
                for (r, gv) in g.data().iter().enumerate() {
                    gx[r * d + col] = *gv;
                }
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), gx)?);
            }
            Op::L1Mean { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let s = g.item() / av.len().max(1) as f64;
                let ga: Vec<f64> = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(x, y)| {
                        if x > y {
                            s
                        } else if x < y {
                            -s
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let ga = Tensor::from_vec(av.shape(), ga)?;
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, ga.map(|v| -v));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::NegLogMean { p, complement } => {
                let pv = self.value(*p);
                let s = g.item() / pv.len() as f64;
                let gp: Vec<f64> = pv
                    .data()
                    .iter()
                    .map(|&v| {
                        if *complement {
                            let q = 1.0 - v;
                            if q > LOG_FLOOR {
                                s / q
                            } else {
                                0.0
                            }
                        } else if v > LOG_FLOOR {
                            -s / v
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *p, Tensor::from_vec(pv.shape(), gp)?);
            }
            Op::Nll { probs, labels } => {
                let pv = self.value(*probs);
                let k = pv.shape()[1];
                let s = g.item() / labels.len().max(1) as f64;
                let mut gp = vec![0.0; pv.len()];
                for (i, &y) in labels.iter().enumerate() {
                    let v = pv.data()[i * k + y];
                    if v > LOG_FLOOR {
                        gp[i * k + y] = -s / v;
                    }
                }
                self.accumulate(grads, *probs, Tensor::from_vec(pv.shape(), gp)?);
            }
            Op::Mmd { x, y, spec } => {
                let (gx, gy) = mmd_unbiased_grad(self.value(*x), self.value(*y), spec)?;
                let s = g.item();
                if self.requires_grad(*x) {
                    self.accumulate(grads, *x, gx.map(|v| v * s));
                }
                if self.requires_grad(*y) {
                    self.accumulate(grads, *y, gy.map(|v| v * s));
                }
            }
            Op::WeightedSum { parts } => {
                for &(v, w) in parts {
                    if self.requires_grad(v) {
                        self.accumulate(grads, v, g.map(|x| x * w));
                    }
                }
            }
            Op::Dot { x, c } => {
                let s = g.item();
                self.accumulate(grads, *x, c.map(|v| v * s));
            }
        }
        Ok(())
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], plane: usize) {
    let c = bias.len();
    for (i, chunk) in y.chunks_mut(plane).enumerate() {
        let b = bias[i % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn row_sums(m: &[f64], rows: usize) -> Vec<f64> {
    let cols = m.len() / rows.max(1);
    m.chunks(cols.max(1)).map(|r| r.iter().sum()).collect()
}

#[cfg(test)]
mod tests;
