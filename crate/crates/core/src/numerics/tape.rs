//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every operation applied during a forward pass. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! accumulates `d loss / d node` into each node that requires a gradient.
//! Gradients accumulate across calls until [`Tape::zero_grads`].
//!
//! Every op checks its output for NaN/Inf and reports the op by name instead of
//! letting a non-finite value flow downstream.

use rand::Rng;

use crate::error::{Error, Result};

use super::real::Real;
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log1p,
    Silu,
}

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Exp => "exp",
            Unary::Log1p => "log1p",
            Unary::Silu => "silu",
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Backward rule for an op defined outside this module.
///
/// `grad_inputs[i]` arrives zeroed with the length of `inputs[i]`; the tape
/// adds it into the adjoint of that input.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_out: &[T], grad_inputs: &mut [Vec<T>]);
}

enum Op<T: Real> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Unary(Var, Unary),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Conv1d {
        x: Var,
        kernel: Var,
    },
    Transpose(Var),
    FlipRows(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Var, Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    BceWithLogits {
        logits: Var,
        labels: Vec<T>,
        pos_weight: T,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Largest depthwise convolution kernel accepted.
pub const MAX_CONV_WIDTH: usize = 64;

/// Operation record for one computation graph.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite<T: Real>(op: &str, t: &Tensor<T>) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { stage: op.to_string() })
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that records values only; nothing on it requires a gradient.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`, if a backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Var {
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = value.with_requires_grad(false);
        // Saved tensors are dropped when nothing downstream needs them.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, name: &str, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Result<Var> {
        check_finite(name, &value)?;
        Ok(self.push(value, inputs, op))
    }

    /// Records `t` as a leaf; it participates in differentiation iff
    /// `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = self.grad_enabled && t.requires_grad();
        let value = t.with_requires_grad(false);
        self.nodes.push(Node {
            value,
            requires_grad: rg,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        let mut t = t.clone();
        t.zero_grad();
        self.leaf(t.with_requires_grad(true))
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .map_err(|_| Error::shape(op, format!("operand shape {:?}", self.value(v).shape())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let out = {
            let ad = self.value(a).data();
            let bd = self.value(b).data();
            let mut out = vec![T::zero(); m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = ad[i * k + p];
                    if av == T::zero() {
                        continue;
                    }
                    let brow = &bd[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
            out
        };
        let t = Tensor::new(vec![m, n], out)?;
        self.push_checked("matmul", t, &[a, b], Op::MatMul(a, b))
    }

    /// `x · wᵀ + b` with `w` stored `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (rows, fan_in) = self.dims2(x, "linear")?;
        let (fan_out, w_in) = self.dims2(w, "linear")?;
        if fan_in != w_in {
            return Err(Error::shape(
                "linear",
                format!("input width {fan_in} vs weight [{fan_out}x{w_in}]"),
            ));
        }
        if let Some(b) = b {
            if self.value(b).len() != fan_out {
                return Err(Error::shape(
                    "linear",
                    format!("bias of {} for {fan_out} outputs", self.value(b).len()),
                ));
            }
        }
        let mut out = vec![T::zero(); rows * fan_out];
        {
            let xd = self.value(x).data();
            let wd = self.value(w).data();
            let bd = b.map(|b| self.value(b).data());
            for r in 0..rows {
                let xr = &xd[r * fan_in..(r + 1) * fan_in];
                let orow = &mut out[r * fan_out..(r + 1) * fan_out];
                for (o, slot) in orow.iter_mut().enumerate() {
                    let wr = &wd[o * fan_in..(o + 1) * fan_in];
                    let mut acc = T::zero();
                    for (&xv, &wv) in xr.iter().zip(wr) {
                        acc += xv * wv;
                    }
                    *slot = acc + bd.map_or(T::zero(), |bd| bd[o]);
                }
            }
        }
        let t = Tensor::new(vec![rows, fan_out], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push_checked("linear", t, &inputs, Op::Linear { x, w, b })
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push_checked("add", t, &[a, b], Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push_checked("mul", t, &[a, b], Op::Mul(a, b))
    }

    /// Adds a length-`C` vector to every row of a `[R, C]` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, c) = self.dims2(x, "add_row")?;
        if self.value(row).len() != c {
            return Err(Error::shape(
                "add_row",
                format!("row of {} for width {c}", self.value(row).len()),
            ));
        }
        let rd = self.value(row).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + rd[i % c])
            .collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        self.push_checked("add_row", t, &[x, row], Op::AddRow(x, row))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let data = self.value(x).data().iter().map(|&v| v * s).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        self.push_checked("scale", t, &[x], Op::Scale(x, s))
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Result<Var> {
        let xv = self.value(x).data();
        if f == Unary::Log1p {
            if let Some(bad) = xv.iter().find(|&&v| v <= -T::one()) {
                return Err(Error::Domain {
                    op: "log1p",
                    detail: format!("argument {bad} <= -1"),
                });
            }
        }
        let data = xv
            .iter()
            .map(|&v| match f {
                Unary::Tanh => v.tanh(),
                Unary::Sigmoid => sigmoid(v),
                Unary::Softplus => softplus(v),
                Unary::Exp => v.exp(),
                Unary::Log1p => v.ln_1p(),
                Unary::Silu => v * sigmoid(v),
            })
            .collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        self.push_checked(f.name(), t, &[x], Op::Unary(x, f))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Softplus)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Silu)
    }

    /// Softmax of a matrix along `axis` (0 = down columns, 1 = along rows),
    /// max-subtracted.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "softmax")?;
        if axis > 1 {
            return Err(Error::shape("softmax", format!("axis {axis} on a matrix")));
        }
        let xd = self.value(x).data();
        check_finite("softmax input", self.value(x))?;
        let mut out = vec![T::zero(); r * c];
        let (outer, inner, stride_outer, stride_inner) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
        for o in 0..outer {
            let idx = |i: usize| o * stride_outer + i * stride_inner;
            let mut m = T::neg_infinity();
            for i in 0..inner {
                m = m.max(xd[idx(i)]);
            }
            let mut s = T::zero();
            for i in 0..inner {
                let e = (xd[idx(i)] - m).exp();
                out[idx(i)] = e;
                s += e;
            }
            for i in 0..inner {
                out[idx(i)] /= s;
            }
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        self.push_checked("softmax", t, &[x], Op::Softmax { x, axis })
    }

    /// Normalizes the last axis to zero mean / unit variance, then applies
    /// `gamma * x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let c = *shape.last().ok_or_else(|| Error::shape("layer_norm", "rank-0 input"))?;
        if c == 0 {
            return Err(Error::shape("layer_norm", "empty normalized axis"));
        }
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "affine params {}/{} for width {c}",
                    self.value(gamma).len(),
                    self.value(beta).len()
                ),
            ));
        }
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = xd.len() / c;
        let cn = T::lit(c as f64);
        let mut out = vec![T::zero(); xd.len()];
        let mut xhat = vec![T::zero(); xd.len()];
        let mut rstd = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &xd[r * c..(r + 1) * c];
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let xh = (row[j] - mean) * rs;
                xhat[r * c + j] = xh;
                out[r * c + j] = xh * g[j] + b[j];
            }
        }
        let t = Tensor::new(shape, out)?;
        self.push_checked(
            "layer_norm",
            t,
            &[x, gamma, beta],
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    /// Per-channel causal convolution: `y[t,c] = Σ_j kernel[j,c] · x[t-j,c]`,
    /// with implicit zeros before the first step. Tap 0 is the current sample.
    pub fn depthwise_conv1d(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (steps, ch) = self.dims2(x, "depthwise_conv1d")?;
        let (k, kch) = self.dims2(kernel, "depthwise_conv1d")?;
        if k == 0 || k > MAX_CONV_WIDTH {
            return Err(Error::Config(format!(
                "convolution width {k} outside 1..={MAX_CONV_WIDTH}"
            )));
        }
        if kch != ch {
            return Err(Error::shape(
                "depthwise_conv1d",
                format!("kernel has {kch} channels, input {ch}"),
            ));
        }
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let mut out = vec![T::zero(); steps * ch];
        for t in 0..steps {
            let orow = &mut out[t * ch..(t + 1) * ch];
            for j in 0..k.min(t + 1) {
                let xr = &xd[(t - j) * ch..(t - j + 1) * ch];
                let kr = &kd[j * ch..(j + 1) * ch];
                for c in 0..ch {
                    orow[c] += kr[c] * xr[c];
                }
            }
        }
        let t = Tensor::new(vec![steps, ch], out)?;
        self.push_checked("depthwise_conv1d", t, &[x, kernel], Op::Conv1d { x, kernel })
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "transpose")?;
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xd[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        Ok(self.push(t, &[x], Op::Transpose(x)))
    }

    /// Reverses the row (time) order of a matrix.
    pub fn flip_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "flip_rows")?;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(r * c);
        for i in (0..r).rev() {
            out.extend_from_slice(&xd[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        Ok(self.push(t, &[x], Op::FlipRows(x)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "slice_cols")?;
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {c}", start + len),
            ));
        }
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&xd[i * c + start..i * c + start + len]);
        }
        let t = Tensor::new(vec![r, len], out)?;
        Ok(self.push(t, &[x], Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2(a, "concat_cols")?;
        let (rb, cb) = self.dims2(b, "concat_cols")?;
        if ra != rb {
            return Err(Error::shape("concat_cols", format!("{ra} rows vs {rb} rows")));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&ad[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&bd[i * cb..(i + 1) * cb]);
        }
        let t = Tensor::new(vec![ra, ca + cb], out)?;
        Ok(self.push(t, &[a, b], Op::ConcatCols(a, b)))
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`. A zero rate returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push(t, &[x], Op::Dropout { x, mask }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        self.push_checked("sum", Tensor::scalar(s), &[x], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = self.value(x).data().iter().copied().sum::<T>() / T::lit(n as f64);
        self.push_checked("mean", Tensor::scalar(s), &[x], Op::Mean(x))
    }

    /// Mean over the batch of `-[w·y·ln σ(s) + (1-y)·ln(1-σ(s))]`, evaluated
    /// as `w·y·softplus(-s) + (1-y)·softplus(s)`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T], pos_weight: T) -> Result<Var> {
        let s = self.value(logits).data();
        if s.len() != labels.len() || s.is_empty() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} logits vs {} labels", s.len(), labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::Contract(format!("label {bad} not in {{0, 1}}")));
        }
        let total: T = s
            .iter()
            .zip(labels)
            .map(|(&s, &y)| pos_weight * y * softplus(-s) + (T::one() - y) * softplus(s))
            .sum();
        let loss = total / T::lit(s.len() as f64);
        self.push_checked(
            "bce_with_logits",
            Tensor::scalar(loss),
            &[logits],
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
                pos_weight,
            },
        )
    }

    /// Records an externally computed output with its own backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Result<Var> {
        let name = op.name();
        self.push_checked(
            name,
            output,
            inputs,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        )
    }

    /// Propagates `d loss / d node` from the scalar `loss` to every node that
    /// requires a gradient, adding into any gradient already accumulated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        for (i, a) in adj.into_iter().enumerate() {
            if let Some(a) = a {
                if self.nodes[i].requires_grad {
                    self.nodes[i].value.accumulate_grad(&a)?;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2().unwrap();
                let (_, n) = val(*b).dims2().unwrap();
                let (ad, bd) = (val(*a).data(), val(*b).data());
                if rg(*a) {
                    acc(adj, *a, m * k, |da| {
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let br = &bd[p * n..(p + 1) * n];
                                da[r * k + p] += dot(gr, br);
                            }
                        }
                    });
                }
                if rg(*b) {
                    acc(adj, *b, k * n, |db| {
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                axpy(&mut db[p * n..(p + 1) * n], ad[r * k + p], gr);
                            }
                        }
                    });
                }
            }
            Op::Linear { x, w, b } => {
                let (rows, fan_in) = val(*x).dims2().unwrap();
                let (fan_out, _) = val(*w).dims2().unwrap();
                let (xd, wd) = (val(*x).data(), val(*w).data());
                if rg(*x) {
                    acc(adj, *x, rows * fan_in, |dx| {
                        for r in 0..rows {
                            let dxr = &mut dx[r * fan_in..(r + 1) * fan_in];
                            for o in 0..fan_out {
                                let go = g[r * fan_out + o];
                                if go != T::zero() {
                                    axpy(dxr, go, &wd[o * fan_in..(o + 1) * fan_in]);
                                }
                            }
                        }
                    });
                }
                if rg(*w) {
                    acc(adj, *w, fan_out * fan_in, |dw| {
                        for r in 0..rows {
                            let xr = &xd[r * fan_in..(r + 1) * fan_in];
                            for o in 0..fan_out {
                                let go = g[r * fan_out + o];
                                if go != T::zero() {
                                    axpy(&mut dw[o * fan_in..(o + 1) * fan_in], go, xr);
                                }
                            }
                        }
                    });
                }
                if let Some(b) = b {
                    if rg(*b) {
                        acc(adj, *b, fan_out, |db| {
                            for r in 0..rows {
                                for o in 0..fan_out {
                                    db[o] += g[r * fan_out + o];
                                }
                            }
                        });
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if rg(v) {
                        acc(adj, v, g.len(), |d| axpy(d, T::one(), g));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                if rg(*a) {
                    acc(adj, *a, g.len(), |d| {
                        for j in 0..g.len() {
                            d[j] += g[j] * bd[j];
                        }
                    });
                }
                if rg(*b) {
                    acc(adj, *b, g.len(), |d| {
                        for j in 0..g.len() {
                            d[j] += g[j] * ad[j];
                        }
                    });
                }
            }
            Op::AddRow(x, row) => {
                if rg(*x) {
                    acc(adj, *x, g.len(), |d| axpy(d, T::one(), g));
                }
                if rg(*row) {
                    let c = val(*row).len();
                    acc(adj, *row, c, |d| {
                        for (j, &gv) in g.iter().enumerate() {
                            d[j % c] += gv;
                        }
                    });
                }
            }
            Op::Scale(x, s) => {
                if rg(*x) {
                    acc(adj, *x, g.len(), |d| axpy(d, *s, g));
                }
            }
            Op::Unary(x, f) => {
                let xd = val(*x).data();
                acc(adj, *x, g.len(), |d| {
                    for j in 0..g.len() {
                        let (xv, yv) = (xd[j], out[j]);
                        let dydx = match f {
                            Unary::Tanh => T::one() - yv * yv,
                            Unary::Sigmoid => yv * (T::one() - yv),
                            Unary::Softplus => sigmoid(xv),
                            Unary::Exp => yv,
                            Unary::Log1p => T::one() / (T::one() + xv),
                            Unary::Silu => {
                                let s = sigmoid(xv);
                                s * (T::one() + xv * (T::one() - s))
                            }
                        };
                        d[j] += g[j] * dydx;
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let (r, c) = val(*x).dims2().unwrap();
                let (outer, inner, so, si) = if *axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                acc(adj, *x, r * c, |d| {
                    for o in 0..outer {
                        let idx = |i: usize| o * so + i * si;
                        let mut s = T::zero();
                        for i in 0..inner {
                            s += g[idx(i)] * out[idx(i)];
                        }
                        for i in 0..inner {
                            d[idx(i)] += out[idx(i)] * (g[idx(i)] - s);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = val(*gamma).len();
                let rows = g.len() / c;
                let gd = val(*gamma).data();
                if rg(*beta) {
                    acc(adj, *beta, c, |d| {
                        for (j, &gv) in g.iter().enumerate() {
                            d[j % c] += gv;
                        }
                    });
                }
                if rg(*gamma) {
                    acc(adj, *gamma, c, |d| {
                        for (j, &gv) in g.iter().enumerate() {
                            d[j % c] += gv * xhat[j];
                        }
                    });
                }
                if rg(*x) {
                    let cn = T::lit(c as f64);
                    acc(adj, *x, g.len(), |d| {
                        for r in 0..rows {
                            let mut m1 = T::zero();
                            let mut m2 = T::zero();
                            for j in 0..c {
                                let dxh = g[r * c + j] * gd[j];
                                m1 += dxh;
                                m2 += dxh * xhat[r * c + j];
                            }
                            m1 /= cn;
                            m2 /= cn;
                            for j in 0..c {
                                let dxh = g[r * c + j] * gd[j];
                                d[r * c + j] += rstd[r] * (dxh - m1 - xhat[r * c + j] * m2);
                            }
                        }
                    });
                }
            }
            Op::Conv1d { x, kernel } => {
                let (steps, ch) = val(*x).dims2().unwrap();
                let (k, _) = val(*kernel).dims2().unwrap();
                let (xd, kd) = (val(*x).data(), val(*kernel).data());
                if rg(*x) {
                    acc(adj, *x, steps * ch, |dx| {
                        for t in 0..steps {
                            for j in 0..k.min(t + 1) {
                                for c in 0..ch {
                                    dx[(t - j) * ch + c] += g[t * ch + c] * kd[j * ch + c];
                                }
                            }
                        }
                    });
                }
                if rg(*kernel) {
                    acc(adj, *kernel, k * ch, |dk| {
                        for t in 0..steps {
                            for j in 0..k.min(t + 1) {
                                for c in 0..ch {
                                    dk[j * ch + c] += g[t * ch + c] * xd[(t - j) * ch + c];
                                }
                            }
                        }
                    });
                }
            }
            Op::Transpose(x) => {
                let (r, c) = val(*x).dims2().unwrap();
                acc(adj, *x, r * c, |d| {
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::FlipRows(x) => {
                let (r, c) = val(*x).dims2().unwrap();
                acc(adj, *x, r * c, |d| {
                    for i in 0..r {
                        let src = &g[(r - 1 - i) * c..(r - i) * c];
                        axpy(&mut d[i * c..(i + 1) * c], T::one(), src);
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let (r, c) = val(*x).dims2().unwrap();
                let len = g.len() / r.max(1);
                acc(adj, *x, r * c, |d| {
                    for i in 0..r {
                        axpy(
                            &mut d[i * c + start..i * c + start + len],
                            T::one(),
                            &g[i * len..(i + 1) * len],
                        );
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = val(*a).dims2().unwrap();
                let (_, cb) = val(*b).dims2().unwrap();
                let w = ca + cb;
                if rg(*a) {
                    acc(adj, *a, r * ca, |d| {
                        for i in 0..r {
                            axpy(&mut d[i * ca..(i + 1) * ca], T::one(), &g[i * w..i * w + ca]);
                        }
                    });
                }
                if rg(*b) {
                    acc(adj, *b, r * cb, |d| {
                        for i in 0..r {
                            axpy(&mut d[i * cb..(i + 1) * cb], T::one(), &g[i * w + ca..(i + 1) * w]);
                        }
                    });
                }
            }
            Op::Dropout { x, mask } => {
                acc(adj, *x, g.len(), |d| {
                    for j in 0..g.len() {
                        d[j] += g[j] * mask[j];
                    }
                });
            }
            Op::Sum(x) => {
                let n = val(*x).len();
                acc(adj, *x, n, |d| d.iter_mut().for_each(|v| *v += g[0]));
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let s = g[0] / T::lit(n as f64);
                acc(adj, *x, n, |d| d.iter_mut().for_each(|v| *v += s));
            }
            Op::BceWithLogits {
                logits,
                labels,
                pos_weight,
            } => {
                let s = val(*logits).data();
                let n = T::lit(s.len() as f64);
                acc(adj, *logits, s.len(), |d| {
                    for j in 0..s.len() {
                        let p = sigmoid(s[j]);
                        let y = labels[j];
                        d[j] += g[0] * (-*pos_weight * y * (T::one() - p) + (T::one() - y) * p) / n;
                    }
                });
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor<T>> = inputs.iter().map(|&v| val(v)).collect();
                let mut grads: Vec<Vec<T>> = ins.iter().map(|t| vec![T::zero(); t.len()]).collect();
                op.backward(&ins, &node.value, g, &mut grads);
                for (&v, gi) in inputs.iter().zip(grads) {
                    if rg(v) {
                        let n = gi.len();
                        acc(adj, v, n, |d| axpy(d, T::one(), &gi));
                    }
                }
            }
        }
    }
}

fn acc<T: Real>(adj: &mut [Option<Vec<T>>], v: Var, n: usize, f: impl FnOnce(&mut [T])) {
    let slot = adj[v.0].get_or_insert_with(|| vec![T::zero(); n]);
    f(slot);
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}
