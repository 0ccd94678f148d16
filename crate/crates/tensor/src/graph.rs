//! Reverse-mode differentiation over a recorded operation list.
//!
//! Every operation appends one node holding its output value; nodes are
//! therefore stored in topological order and the backward pass is a single
//! reverse sweep that visits each node once.

use crate::error::{dim_err, Result, TensorError};
use crate::ops::{conv, spatial};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    },
    DeformConv2d {
        x: Var,
        off: Var,
        w: Var,
        b: Option<Var>,
    },
    AffineGrid(Var),
    GridSample {
        x: Var,
        grid: Var,
    },
    PixelShuffle(Var, usize),
    PixelUnshuffle(Var, usize),
    Resize(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f32),
    LeakyRelu(Var, f32),
    Sigmoid(Var),
    Log(Var),
    Abs(Var),
    Clamp(Var, f32, f32),
    Concat(Vec<Var>, usize),
    Mean(Var),
    Sum(Var),
    SpatialMean(Var),
    Reshape(Var),
    BceLogits {
        x: Var,
        target: Tensor,
        eps: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation. Single-writer; independent graphs may be built
/// concurrently over shared read-only parameter tensors.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node, saved activation and gradient.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.consumed = false;
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is populated by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to a variable leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = self.any_grad(inputs);
        self.push(value, op, rg)
    }

    // ── convolution and sampling ─────────────────────────────────────

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let out = conv::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, padding)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.record(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            },
            &inputs,
        ))
    }

    /// Deformable convolution with stride 1 and same padding; `off` holds
    /// `(dy, dx)` pairs per kernel tap.
    pub fn deformable_conv2d(&mut self, x: Var, off: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = conv::deformable_conv2d(self.value(x), self.value(off), self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![x, off, w];
        inputs.extend(b);
        Ok(self.record(out, Op::DeformConv2d { x, off, w, b }, &inputs))
    }

    pub fn affine_grid(&mut self, theta: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = spatial::affine_grid(self.value(theta), out_h, out_w)?;
        Ok(self.record(out, Op::AffineGrid(theta), &[theta]))
    }

    pub fn grid_sample(&mut self, x: Var, grid: Var) -> Result<Var> {
        let out = spatial::grid_sample(self.value(x), self.value(grid))?;
        Ok(self.record(out, Op::GridSample { x, grid }, &[x, grid]))
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = spatial::pixel_shuffle(self.value(x), r)?;
        Ok(self.record(out, Op::PixelShuffle(x, r), &[x]))
    }

    pub fn pixel_unshuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = spatial::pixel_unshuffle(self.value(x), r)?;
        Ok(self.record(out, Op::PixelUnshuffle(x, r), &[x]))
    }

    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = spatial::resize_bilinear(self.value(x), out_h, out_w)?;
        Ok(self.record(out, Op::Resize(x), &[x]))
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn binary(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f32, f32) -> f32) -> Result<Var> {
        let name = match op {
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            _ => "mul",
        };
        let (ta, tb) = (self.value(a), self.value(b));
        batch_repeat(name, ta.shape(), tb.shape())?;
        let bd = tb.data();
        let per = bd.len();
        let data: Vec<f32> = ta.data().iter().enumerate().map(|(i, &x)| f(x, bd[i % per])).collect();
        let out = Tensor::new(ta.shape(), data)?;
        Ok(self.record(out, op, &[a, b]))
    }

    /// Elementwise sum; `b` may have batch 1 and is then repeated.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.record(out, Op::Affine(x, scale), &[x])
    }

    pub fn scale(&mut self, x: Var, scale: f32) -> Var {
        self.affine(x, scale, 0.0)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.record(out, Op::LeakyRelu(x, slope), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.record(out, Op::Sigmoid(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f32::ln);
        self.record(out, Op::Log(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f32::abs);
        self.record(out, Op::Abs(x), &[x])
    }

    /// Clamps to `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.record(out, Op::Clamp(x, lo, hi), &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .value(*xs.first().ok_or_else(|| dim_err("concat", "no inputs"))?)
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(dim_err("concat", format!("axis {axis} out of range for rank {}", first.len())));
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut total = 0;
        for &v in xs {
            let s = self.value(v).shape();
            let ok = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    expected: format!("{first:?} except axis {axis}"),
                    got: format!("{s:?}"),
                });
            }
            total += s[axis];
        }
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let out = Tensor::new(&shape, data)?;
        Ok(self.record(out, Op::Concat(xs.to_vec(), axis), xs))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = (t.sum() / t.numel().max(1) as f64) as f32;
        self.record(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum() as f32;
        self.record(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Global average pool: `N×C×H×W → N×C×1×1`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4("spatial_mean")?;
        let hw = (h * w) as f32;
        let data: Vec<f32> = t.data().chunks(h * w).map(|p| p.iter().sum::<f32>() / hw).collect();
        let out = Tensor::new(&[n, c, 1, 1], data)?;
        Ok(self.record(out, Op::SpatialMean(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.record(out, Op::Reshape(x), &[x]))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Accumulates `∂loss/∂v` into every variable leaf reachable from
    /// `loss`. Gradients of intermediate nodes are released as the sweep
    /// passes them; a graph supports a single backward pass.
    /// Mean binary cross-entropy between `sigmoid(logits)` and `target`,
    /// with the probability clamped to `[eps, 1 - eps]`. Evaluated in f64.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor, eps: f64) -> Result<Var> {
        let x = self.value(logits);
        if x.shape() != target.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                expected: format!("{:?}", x.shape()),
                got: format!("{:?}", target.shape()),
            });
        }
        let total: f64 = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(&z, &t)| {
                let p = sigmoid64(z as f64).clamp(eps, 1.0 - eps);
                let t = t as f64;
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        let loss = Tensor::scalar((total / x.numel().max(1) as f64) as f32);
        let op = Op::BceLogits {
            x: logits,
            target: target.clone(),
            eps,
        };
        Ok(self.record(loss, op, &[logits]))
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let seed = Tensor::full(lv.shape(), 1.0);
        self.consumed = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(seed);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.grads[i] = Some(g);
                continue;
            }
            for (v, dv) in self.vjp(i, &g) {
                self.accumulate(v, dv);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, dv: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(dv.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(dv),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products of node `i` with upstream gradient `g`.
    fn vjp(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut res = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let want = [self.wants(*x), self.wants(*w), b.is_some_and(|b| self.wants(b))];
                let gr = conv::conv2d_backward(self.value(*x), self.value(*w), g, *stride, *padding, want);
                res.extend(gr.input.map(|t| (*x, t)));
                res.extend(gr.weight.map(|t| (*w, t)));
                if let (Some(b), Some(t)) = (b, gr.bias) {
                    res.push((*b, t));
                }
            }
            Op::DeformConv2d { x, off, w, b } => {
                let want = [
                    self.wants(*x),
                    self.wants(*w),
                    b.is_some_and(|b| self.wants(b)),
                    self.wants(*off),
                ];
                let gr = conv::deformable_conv2d_backward(self.value(*x), self.value(*off), self.value(*w), g, want);
                res.extend(gr.input.map(|t| (*x, t)));
                res.extend(gr.weight.map(|t| (*w, t)));
                res.extend(gr.offsets.map(|t| (*off, t)));
                if let (Some(b), Some(t)) = (b, gr.bias) {
                    res.push((*b, t));
                }
            }
            Op::AffineGrid(theta) => {
                let n = self.value(*theta).shape()[0];
                res.push((*theta, spatial::affine_grid_backward(g, n)));
            }
            Op::GridSample { x, grid } => {
                let (dx, dg) = spatial::grid_sample_backward(
                    self.value(*x),
                    self.value(*grid),
                    g,
                    [self.wants(*x), self.wants(*grid)],
                );
                res.extend(dx.map(|t| (*x, t)));
                res.extend(dg.map(|t| (*grid, t)));
            }
            Op::PixelShuffle(x, r) => {
                res.push((*x, spatial::pixel_unshuffle(g, *r).expect("shuffle grad")));
            }
            Op::PixelUnshuffle(x, r) => {
                res.push((*x, spatial::pixel_shuffle(g, *r).expect("unshuffle grad")));
            }
            Op::Resize(x) => {
                res.push((*x, spatial::resize_bilinear_backward(self.value(*x).shape(), g)));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(*a) {
                    res.push((*a, g.clone()));
                }
                if self.wants(*b) {
                    res.push((*b, fold_batch(&g.map(|v| sign * v), self.value(*b).shape())));
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let per = tb.numel();
                if self.wants(*a) {
                    let d = g.data().iter().enumerate().map(|(k, &gv)| gv * tb.data()[k % per]).collect();
                    res.push((*a, Tensor::new(ta.shape(), d).expect("mul grad")));
                }
                if self.wants(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(&gv, &av)| gv * av).collect();
                    let full = Tensor::new(ta.shape(), d).expect("mul grad");
                    res.push((*b, fold_batch(&full, tb.shape())));
                }
            }
            Op::Affine(x, scale) => res.push((*x, g.map(|v| v * scale))),
            Op::LeakyRelu(x, slope) => {
                res.push((*x, zip_map(g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { gv * slope })));
            }
            Op::Sigmoid(x) => res.push((*x, zip_map(g, out, |gv, s| gv * s * (1.0 - s)))),
            Op::Log(x) => res.push((*x, zip_map(g, self.value(*x), |gv, xv| gv / xv))),
            Op::Abs(x) => res.push((*x, zip_map(g, self.value(*x), |gv, xv| gv * sign(xv)))),
            Op::Clamp(x, lo, hi) => {
                res.push((
                    *x,
                    zip_map(g, self.value(*x), |gv, xv| if xv < *lo || xv > *hi { 0.0 } else { gv }),
                ));
            }
            Op::Concat(xs, axis) => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut start = 0;
                for &v in xs {
                    let vs = self.value(v).shape();
                    let chunk = vs[*axis] * inner;
                    if self.wants(v) {
                        let mut d = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            d.extend_from_slice(&g.data()[o * total + start..o * total + start + chunk]);
                        }
                        res.push((v, Tensor::new(vs, d).expect("concat grad")));
                    }
                    start += chunk;
                }
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                let gv = g.data()[0] / t.numel().max(1) as f32;
                res.push((*x, Tensor::full(t.shape(), gv)));
            }
            Op::Sum(x) => res.push((*x, Tensor::full(self.value(*x).shape(), g.data()[0]))),
            Op::SpatialMean(x) => {
                let t = self.value(*x);
                let hw = t.shape()[2] * t.shape()[3];
                let mut d = Vec::with_capacity(t.numel());
                for &gv in g.data() {
                    d.extend(std::iter::repeat(gv / hw as f32).take(hw));
                }
                res.push((*x, Tensor::new(t.shape(), d).expect("pool grad")));
            }
            Op::Reshape(x) => res.push((*x, g.reshape(self.value(*x).shape()).expect("reshape grad"))),
            Op::BceLogits { x, target, eps } => {
                let scale = g.data()[0] as f64 / target.numel().max(1) as f64;
                // inside the clamp the derivative collapses to p - t; the
                // clamped tails are flat
                let d = zip_map(self.value(*x), target, |z, t| {
                    let p = sigmoid64(z as f64);
                    if p < *eps || p > 1.0 - *eps {
                        0.0
                    } else {
                        ((p - t as f64) * scale) as f32
                    }
                });
                res.push((*x, d));
            }
        }
        res
    }
}

fn sigmoid64(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip_map(g: &Tensor, x: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let d = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(g.shape(), d).expect("elementwise grad")
}

/// Whether `b` must be repeated along the batch axis to match `a`.
fn batch_repeat(op: &'static str, a: &[usize], b: &[usize]) -> Result<bool> {
    if a == b {
        return Ok(false);
    }
    let ok = a.len() == b.len() && !a.is_empty() && b[0] == 1 && a[1..] == b[1..];
    if ok {
        Ok(true)
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            expected: format!("{a:?} (or batch 1)"),
            got: format!("{b:?}"),
        })
    }
}

/// Sums a batched gradient down to `shape` when the operand was repeated.
fn fold_batch(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let per: usize = shape.iter().product();
    let mut d = vec![0.0f32; per];
    for chunk in g.data().chunks(per) {
        for (a, b) in d.iter_mut().zip(chunk) {
            *a += b;
        }
    }
    Tensor::new(shape, d).expect("batch fold")
}
