use rand::Rng;

use super::kernels::{self, ConvGeom, NormSaved};
use super::Tensor;
use crate::error::{Error, Result};
use crate::ggd::{digamma, log_gamma};

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Abs,
    Log,
    Exp,
    Relu,
    LeakyRelu(f64),
    Recip,
    LogGamma,
    Clamp(f64, f64),
    Scale(f64),
    Shift,
}

enum Op {
    Leaf,
    Binary { kind: BinaryKind, lhs: Var, rhs: Var },
    Unary { kind: UnaryKind, input: Var },
    Pow { base: Var, exponent: Var },
    AbsPow { base: Var, exponent: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Sum(Var),
    Mean(Var),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom },
    MaxPool { input: Var, argmax: Vec<usize> },
    Upsample2x { input: Var, nc: usize, h: usize, w: usize },
    InstanceNorm { input: Var, gain: Var, bias: Var, saved: NormSaved, n: usize, c: usize, hw: usize },
    Dropout { input: Var, mask: Vec<f64> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Binary { lhs, rhs, .. } => vec![*lhs, *rhs],
            Op::Pow { base, exponent } | Op::AbsPow { base, exponent } => vec![*base, *exponent],
            Op::Unary { input, .. }
            | Op::Sum(input)
            | Op::Mean(input)
            | Op::MaxPool { input, .. }
            | Op::Upsample2x { input, .. }
            | Op::Dropout { input, .. } => vec![*input],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Conv2d { input, weight, bias, .. } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::InstanceNorm { input, gain, bias, .. } => vec![*input, *gain, *bias],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Floor on |x| when differentiating `|x|^e`, keeping `e·|x|^(e−1)` finite
/// for `e < 1` near zero.
const ABS_POW_GRAD_FLOOR: f64 = 1e-8;

/// Append-only tape of tensor ops. Nodes are stored in creation order, which
/// is a topological order, so backward is a single reverse sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn tensor(&self, v: Var) -> Option<Tensor> {
        self.get(v).map(|g| Tensor::new(self.shapes[v.0].clone(), g.to_vec()).expect("gradient shape"))
    }

    /// Moves the gradient out; zeros of the right size when `v` received none.
    pub fn take_or_zeros(&mut self, v: Var) -> Vec<f64> {
        let len = self.shapes[v.0].iter().product();
        self.grads[v.0].take().unwrap_or_else(|| vec![0.0; len])
    }
}

/// `f` over two operands where the shorter one repeats to the longer one's
/// length (its length divides the longer one's under suffix broadcasting).
fn zip_broadcast(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    if b.len() < a.len() {
        for chunk in a.chunks_exact(b.len()) {
            out.extend(chunk.iter().zip(b).map(|(&x, &y)| f(x, y)));
        }
    } else {
        for chunk in b.chunks_exact(a.len()) {
            out.extend(a.iter().zip(chunk).map(|(&x, &y)| f(x, y)));
        }
    }
    out
}

fn broadcast_len(a: &[usize], b: &[usize]) -> Option<usize> {
    let (la, lb) = (a.iter().product::<usize>(), b.iter().product::<usize>());
    let suffix = |long: &[usize], short: &[usize]| short.len() <= long.len() && long.ends_with(short);
    if a == b {
        Some(la)
    } else if lb == 1 || suffix(a, b) {
        Some(la)
    } else if la == 1 || suffix(b, a) {
        Some(lb)
    } else {
        None
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is recorded when `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    // ── elementwise ────────────────────────────────────────────────────

    fn binary(&mut self, kind: BinaryKind, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        let len = broadcast_len(a.shape(), b.shape()).ok_or_else(|| {
            Error::Dimension(format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()))
        })?;
        let shape = if a.numel() == len { a.shape().to_vec() } else { b.shape().to_vec() };
        let (ad, bd) = (a.data(), b.data());
        if let BinaryKind::Div = kind {
            if bd.iter().any(|&v| v == 0.0) {
                return Err(Error::Domain("division by zero".into()));
            }
        }
        let f: fn(f64, f64) -> f64 = match kind {
            BinaryKind::Add => |x, y| x + y,
            BinaryKind::Sub => |x, y| x - y,
            BinaryKind::Mul => |x, y| x * y,
            BinaryKind::Div => |x, y| x / y,
        };
        let data = zip_broadcast(ad, bd, f);
        debug_assert_eq!(data.len(), len);
        Ok(self.push(Tensor::new(shape, data)?, Op::Binary { kind, lhs, rhs }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, input: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(input).map(f);
        self.push(value, Op::Unary { kind, input })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::Shift, x, |v| v + c)
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::Scale(c), x, |v| v * c)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.mul_scalar(x, -1.0)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Abs, x, f64::abs)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Exp, x, f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self.value(x).data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        Ok(self.unary(UnaryKind::Log, x, f64::ln))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Relu, x, |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(UnaryKind::LeakyRelu(slope), x, move |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn recip(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().contains(&0.0) {
            return Err(Error::Domain("reciprocal of zero".into()));
        }
        Ok(self.unary(UnaryKind::Recip, x, |v| 1.0 / v))
    }

    /// Elementwise `ln Γ(x)`; differentiates through the digamma function.
    pub fn log_gamma(&mut self, x: Var) -> Result<Var> {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| log_gamma(v))
            .collect::<Result<Vec<_>>>()?;
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(value, Op::Unary { kind: UnaryKind::LogGamma, input: x }))
    }

    /// Clamp into `[lo, hi]`; the gradient passes through on the closed interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(UnaryKind::Clamp(lo, hi), x, move |v| v.clamp(lo, hi))
    }

    /// `base^exponent` with a tensor exponent, computed as `exp(e·ln b)`.
    pub fn pow(&mut self, base: Var, exponent: Var) -> Result<Var> {
        let (b, e) = (self.value(base), self.value(exponent));
        if let Some(v) = b.data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain(format!("pow with non-positive base {v}")));
        }
        let len = broadcast_len(b.shape(), e.shape())
            .ok_or_else(|| Error::Dimension(format!("cannot broadcast {:?} with {:?}", b.shape(), e.shape())))?;
        let shape = if b.numel() == len { b.shape().to_vec() } else { e.shape().to_vec() };
        let (bd, ed) = (b.data(), e.data());
        let data = (0..len).map(|i| (ed[i % ed.len()] * bd[i % bd.len()].ln()).exp()).collect();
        Ok(self.push(Tensor::new(shape, data)?, Op::Pow { base, exponent }))
    }

    /// `|x|^e`, exactly zero where `x == 0`. Shapes must match.
    pub fn abs_pow(&mut self, base: Var, exponent: Var) -> Result<Var> {
        let value = self.value(base).zip_map(self.value(exponent), |x, e| {
            if x == 0.0 {
                0.0
            } else {
                (e * x.abs().ln()).exp()
            }
        })?;
        Ok(self.push(value, Op::AbsPow { base, exponent }))
    }

    // ── structural ─────────────────────────────────────────────────────

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .value(*inputs.first().ok_or_else(|| Error::Dimension("concat of nothing".into()))?)
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::Dimension(format!("concat axis {axis} out of range for {first:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len() || s.iter().zip(&first).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return Err(Error::Dimension(format!("concat: {s:?} incompatible with {first:?}")));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let m = self.value(x).mean();
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    // ── spatial ────────────────────────────────────────────────────────

    fn nchw(&self, v: Var, what: &str) -> Result<[usize; 4]> {
        match *self.shape(v) {
            [n, c, h, w] => Ok([n, c, h, w]),
            ref s => Err(Error::Dimension(format!("{what}: expected NCHW input, got {s:?}"))),
        }
    }

    /// Cross-correlation of `[N,C,H,W]` with `[F,C,k,k]` plus optional `[F]` bias.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let [n, c, h, w] = self.nchw(input, "conv2d")?;
        let (f, k) = match *self.shape(weight) {
            [f, wc, k, k2] if wc == c && k == k2 && k >= 1 => (f, k),
            ref s => {
                return Err(Error::Dimension(format!("conv2d: weight {s:?} incompatible with {c} input channels")))
            }
        };
        if let Some(b) = bias {
            if self.shape(b) != [f] {
                return Err(Error::Dimension(format!("conv2d: bias {:?} for {f} filters", self.shape(b))));
            }
        }
        if stride == 0 {
            return Err(Error::Dimension("conv2d: zero stride".into()));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        if ph < k || pw < k || (ph - k) % stride != 0 || (pw - k) % stride != 0 {
            return Err(Error::Dimension(format!(
                "conv2d: {h}x{w} input, kernel {k}, stride {stride}, pad {pad} gives a non-integral output"
            )));
        }
        let geom = ConvGeom { n, c, h, w, f, k, stride, pad, ho: (ph - k) / stride + 1, wo: (pw - k) / stride + 1 };
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(vec![n, f, geom.ho, geom.wo], out)?;
        Ok(self.push(value, Op::Conv2d { input, weight, bias, geom }))
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let [n, c, h, w] = self.nchw(input, "maxpool2d")?;
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(Error::Dimension(format!("maxpool2d: {h}x{w} not divisible by window {window}")));
        }
        let (out, argmax) = kernels::maxpool_forward(self.value(input).data(), n * c, h, w, window);
        let value = Tensor::new(vec![n, c, h / window, w / window], out)?;
        Ok(self.push(value, Op::MaxPool { input, argmax }))
    }

    /// Bilinear 2x upsampling with half-pixel centres (align_corners = false).
    pub fn upsample_bilinear2x(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = self.nchw(input, "upsample_bilinear2x")?;
        if h == 0 || w == 0 {
            return Err(Error::Dimension("upsample_bilinear2x: empty spatial dims".into()));
        }
        let out = kernels::upsample2x_forward(self.value(input).data(), n * c, h, w);
        let value = Tensor::new(vec![n, c, 2 * h, 2 * w], out)?;
        Ok(self.push(value, Op::Upsample2x { input, nc: n * c, h, w }))
    }

    /// Per-(sample, channel) normalization over space, then a per-channel affine.
    pub fn instance_norm(&mut self, input: Var, gain: Var, bias: Var) -> Result<Var> {
        let [n, c, h, w] = self.nchw(input, "instance_norm")?;
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return Err(Error::Dimension(format!(
                "instance_norm: gain {:?} / bias {:?} for {c} channels",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let (out, saved) = kernels::instance_norm_forward(
            self.value(input).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            n,
            c,
            h * w,
        );
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, Op::InstanceNorm { input, gain, bias, saved, n, c, hw: h * w }))
    }

    /// Inverted dropout. Identity when inactive or `p == 0`; otherwise each
    /// element is zeroed with probability `p` and survivors scaled by `1/(1−p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, p: f64, active: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1)")));
        }
        if !active || p == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - p);
        let x = self.value(input);
        let mask: Vec<f64> = (0..x.numel()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().zip(&mask).map(|(v, m)| v * m).collect())?;
        Ok(self.push(value, Op::Dropout { input, mask }))
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Gradients of intermediate nodes are
    /// released as soon as they have been propagated; leaf gradients are kept.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = (if matches!(node.op, Op::Leaf) { None } else { grads[i].take() }) else {
                continue;
            };
            for input in node.op.inputs() {
                if input.0 >= i {
                    return Err(Error::Graph(format!("node {i} depends on later node {}", input.0)));
                }
            }
            self.propagate(i, &g, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&contribution).for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Gradient of a broadcast operand: fold the output-sized gradient back
    /// onto the (possibly smaller) operand by summing repeats.
    fn reduce_to(&self, v: Var, full: Vec<f64>) -> Vec<f64> {
        let len = self.value(v).numel();
        if len == full.len() {
            return full;
        }
        let mut out = vec![0.0; len];
        for chunk in full.chunks_exact(len) {
            out.iter_mut().zip(chunk).for_each(|(o, g)| *o += g);
        }
        out
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, lhs, rhs } => {
                let (a, b) = (self.value(*lhs).data(), self.value(*rhs).data());
                if self.wants(*lhs) {
                    let full = match kind {
                        BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                        BinaryKind::Mul => zip_broadcast(g, b, |gk, bk| gk * bk),
                        BinaryKind::Div => zip_broadcast(g, b, |gk, bk| gk / bk),
                    };
                    let da = self.reduce_to(*lhs, full);
                    self.accumulate(grads, *lhs, da);
                }
                if self.wants(*rhs) {
                    let full = match kind {
                        BinaryKind::Add => g.to_vec(),
                        BinaryKind::Sub => g.iter().map(|gk| -gk).collect(),
                        BinaryKind::Mul => zip_broadcast(g, a, |gk, ak| gk * ak),
                        BinaryKind::Div => {
                            let ga = zip_broadcast(g, a, |gk, ak| gk * ak);
                            zip_broadcast(&ga, b, |t, bk| -t / (bk * bk))
                        }
                    };
                    let db = self.reduce_to(*rhs, full);
                    self.accumulate(grads, *rhs, db);
                }
            }
            Op::Unary { kind, input } => {
                let x = self.value(*input).data();
                let dx = g
                    .iter()
                    .zip(x)
                    .zip(y)
                    .map(|((&gk, &xk), &yk)| {
                        gk * match *kind {
                            UnaryKind::Abs => {
                                if xk > 0.0 {
                                    1.0
                                } else if xk < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryKind::Log => 1.0 / xk,
                            UnaryKind::Exp => yk,
                            UnaryKind::Relu => {
                                if xk > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryKind::LeakyRelu(s) => {
                                if xk > 0.0 {
                                    1.0
                                } else {
                                    s
                                }
                            }
                            UnaryKind::Recip => -yk * yk,
                            UnaryKind::LogGamma => digamma(xk),
                            UnaryKind::Clamp(lo, hi) => {
                                if (lo..=hi).contains(&xk) {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryKind::Scale(c) => c,
                            UnaryKind::Shift => 1.0,
                        }
                    })
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Pow { base, exponent } => {
                let (b, e) = (self.value(*base).data(), self.value(*exponent).data());
                let (lb, le) = (b.len(), e.len());
                if self.wants(*base) {
                    let db = self.reduce_to(
                        *base,
                        g.iter().enumerate().map(|(k, &gk)| gk * e[k % le] * y[k] / b[k % lb]).collect(),
                    );
                    self.accumulate(grads, *base, db);
                }
                if self.wants(*exponent) {
                    let de = self
                        .reduce_to(*exponent, g.iter().enumerate().map(|(k, &gk)| gk * y[k] * b[k % lb].ln()).collect());
                    self.accumulate(grads, *exponent, de);
                }
            }
            Op::AbsPow { base, exponent } => {
                let (x, e) = (self.value(*base).data(), self.value(*exponent).data());
                if self.wants(*base) {
                    let dx = (0..g.len())
                        .map(|k| {
                            if x[k] == 0.0 {
                                return 0.0;
                            }
                            let mag = x[k].abs().max(ABS_POW_GRAD_FLOOR);
                            g[k] * e[k] * x[k].signum() * ((e[k] - 1.0) * mag.ln()).exp()
                        })
                        .collect();
                    self.accumulate(grads, *base, dx);
                }
                if self.wants(*exponent) {
                    let de = (0..g.len())
                        .map(|k| if x[k] == 0.0 { 0.0 } else { g[k] * y[k] * x[k].abs().ln() })
                        .collect();
                    self.accumulate(grads, *exponent, de);
                }
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let chunk = self.shape(v)[*axis] * inner;
                    if self.wants(v) {
                        let mut dv = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            dv.extend_from_slice(&g[o * total + offset..o * total + offset + chunk]);
                        }
                        self.accumulate(grads, v, dv);
                    }
                    offset += chunk;
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, vec![g[0] / n as f64; n]);
            }
            Op::Conv2d { input, weight, bias, geom } => {
                let need_b = bias.is_some_and(|b| self.wants(b));
                let cg = kernels::conv2d_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    geom,
                    (self.wants(*input), self.wants(*weight), need_b),
                );
                if let Some(dx) = cg.dx {
                    self.accumulate(grads, *input, dx);
                }
                if let Some(dw) = cg.dw {
                    self.accumulate(grads, *weight, dw);
                }
                if let (Some(b), Some(db)) = (bias, cg.db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::MaxPool { input, argmax } => {
                let mut dx = vec![0.0; self.value(*input).numel()];
                for (&src, &gk) in argmax.iter().zip(g) {
                    dx[src] += gk;
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Upsample2x { input, nc, h, w } => {
                self.accumulate(grads, *input, kernels::upsample2x_backward(g, *nc, *h, *w));
            }
            Op::InstanceNorm { input, gain, bias, saved, n, c, hw } => {
                let (dx, dgain, dbias) =
                    kernels::instance_norm_backward(g, self.value(*gain).data(), saved, *n, *c, *hw);
                self.accumulate(grads, *input, dx);
                self.accumulate(grads, *gain, dgain);
                self.accumulate(grads, *bias, dbias);
            }
            Op::Dropout { input, mask } => {
                self.accumulate(grads, *input, g.iter().zip(mask).map(|(a, b)| a * b).collect());
            }
        }
    }
}
