use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::conv::{self, ConvGeometry};
use super::{check_finite, Result, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        geometry: ConvGeometry,
        cols: Vec<f64>,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    LeakyRelu(usize, f64),
    /// Mask already holds the inverted-dropout scale (0 or 1/(1-rate)).
    Dropout(usize, Vec<f64>),
    Concat(Vec<usize>),
    SliceChannels {
        input: usize,
        start: usize,
    },
    FrameDiff(usize),
    Recover {
        vel: usize,
        anchor: usize,
        anchor_channel: usize,
    },
    Sum(usize),
    WeightedSqError {
        pred: usize,
        target: usize,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of a forward computation. Parents always precede children.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `var`; all zeros when `var` does not reach the loss.
    pub fn get(&self, var: Var) -> Tensor {
        assert_eq!(var.tape, self.tape, "gradient lookup with a foreign variable");
        let shape = &self.shapes[var.index];
        match &self.grads[var.index] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn reaches(&self, var: Var) -> bool {
        var.tape == self.tape && self.grads[var.index].is_some()
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index(&self, var: Var) -> Result<usize> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(var.index)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn push_checked(&mut self, op_name: &'static str, value: Tensor, op: Op, parents: &[usize]) -> Result<Var> {
        check_finite(op_name, value.data())?;
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        check_finite("param", value.data())?;
        Ok(self.push(value, Op::Leaf, true))
    }

    /// Leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        check_finite("constant", value.data())?;
        Ok(self.push(value, Op::Leaf, false))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        let i = self.index(var).expect("variable belongs to this tape");
        &self.nodes[i].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.value(var).shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.index(var).map(|i| self.nodes[i].requires_grad).unwrap_or(false)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xi, ki, bi) = (self.index(input)?, self.index(kernel)?, self.index(bias)?);
        let (x, k, b) = (&self.nodes[xi].value, &self.nodes[ki].value, &self.nodes[bi].value);
        let geometry = ConvGeometry::new(x.shape(), k.shape(), b.shape(), stride, padding)?;
        let (out, cols) = conv::forward(&geometry, x.data(), k.data(), b.data())?;
        let value = Tensor::new(vec![geometry.c_out, geometry.out_h, geometry.out_w], out)?;
        let op = Op::Conv2d {
            input: xi,
            kernel: ki,
            bias: bi,
            geometry,
            cols,
        };
        self.push_checked("conv2d", value, op, &[xi, ki, bi])
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, usize, usize)> {
        let (ai, bi) = (self.index(a)?, self.index(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.shape() != bv.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((Tensor::new(av.shape().to_vec(), data)?, ai, bi))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, ai, bi) = self.binary("add", a, b, |x, y| x + y)?;
        self.push_checked("add", value, Op::Add(ai, bi), &[ai, bi])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, ai, bi) = self.binary("sub", a, b, |x, y| x - y)?;
        self.push_checked("sub", value, Op::Sub(ai, bi), &[ai, bi])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xi = self.index(x)?;
        let v = &self.nodes[xi].value;
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a * factor).collect())?;
        self.push_checked("scale", value, Op::Scale(xi, factor), &[xi])
    }

    /// `y = x` for `x >= 0`, `slope * x` otherwise.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&slope) {
            return Err(TensorError::Argument {
                op: "leaky_relu",
                detail: format!("slope {slope} outside [0, 1)"),
            });
        }
        let xi = self.index(x)?;
        let v = &self.nodes[xi].value;
        let data = v.data().iter().map(|&a| if a >= 0.0 { a } else { slope * a }).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        self.push_checked("leaky_relu", value, Op::LeakyRelu(xi, slope), &[xi])
    }

    /// Inverted dropout. Returns `x` itself in inference mode or at rate 0.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Argument {
                op: "dropout",
                detail: format!("rate {rate} outside [0, 1)"),
            });
        }
        let xi = self.index(x)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let v = &self.nodes[xi].value;
        let mask: Vec<f64> = (0..v.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        self.push_checked("dropout", value, Op::Dropout(xi, mask), &[xi])
    }

    /// Concatenates tensors along the leading (channel) axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| TensorError::Argument {
            op: "concat_channels",
            detail: "empty part list".into(),
        })?;
        if parts.len() == 1 {
            self.index(first)?;
            return Ok(first);
        }
        let idx = parts.iter().map(|&p| self.index(p)).collect::<Result<Vec<_>>>()?;
        let tail = self.nodes[idx[0]].value.shape()[1..].to_vec();
        let mut channels = 0;
        let mut data = Vec::new();
        for &i in &idx {
            let v = &self.nodes[i].value;
            if v.shape()[1..] != tail[..] {
                return Err(shape_err(
                    "concat_channels",
                    format!("spatial shape {:?} vs {:?}", &v.shape()[1..], tail),
                ));
            }
            channels += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![channels];
        shape.extend(tail);
        let value = Tensor::new(shape, data)?;
        self.push_checked("concat_channels", value, Op::Concat(idx.clone()), &idx)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xi = self.index(x)?;
        let value = self.nodes[xi].value.channels(start, len)?;
        self.push_checked("slice_channels", value, Op::SliceChannels { input: xi, start }, &[xi])
    }

    /// `out[t] = x[t + 1] - x[t]` along the leading axis.
    pub fn frame_diff(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let v = &self.nodes[xi].value;
        let frames = v.shape()[0];
        if frames < 2 {
            return Err(shape_err("frame_diff", format!("need at least 2 frames, got {frames}")));
        }
        let plane = v.numel() / frames;
        let d = v.data();
        let data = (0..(frames - 1) * plane).map(|i| d[i + plane] - d[i]).collect();
        let mut shape = v.shape().to_vec();
        shape[0] = frames - 1;
        let value = Tensor::new(shape, data)?;
        self.push_checked("frame_diff", value, Op::FrameDiff(xi), &[xi])
    }

    /// `out[i] = anchor[anchor_channel] + sum_{k <= i} vel[k]`.
    pub fn recover_positions(&mut self, vel: Var, anchor: Var, anchor_channel: usize) -> Result<Var> {
        let (vi, ai) = (self.index(vel)?, self.index(anchor)?);
        let (v, a) = (&self.nodes[vi].value, &self.nodes[ai].value);
        if v.shape()[1..] != a.shape()[1..] || anchor_channel >= a.shape()[0] {
            return Err(shape_err(
                "recover_positions",
                format!(
                    "velocities {:?}, anchor {:?} channel {anchor_channel}",
                    v.shape(),
                    a.shape()
                ),
            ));
        }
        let plane = v.numel() / v.shape()[0];
        let mut running = a.data()[anchor_channel * plane..(anchor_channel + 1) * plane].to_vec();
        let mut data = Vec::with_capacity(v.numel());
        for step in v.data().chunks(plane) {
            for (r, d) in running.iter_mut().zip(step) {
                *r += d;
            }
            data.extend_from_slice(&running);
        }
        let value = Tensor::new(v.shape().to_vec(), data)?;
        let op = Op::Recover {
            vel: vi,
            anchor: ai,
            anchor_channel,
        };
        self.push_checked("recover_positions", value, op, &[vi, ai])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let total = self.nodes[xi].value.data().iter().sum();
        self.push_checked("sum", Tensor::scalar(total), Op::Sum(xi), &[xi])
    }

    /// `(1 / (T * N)) * sum_t weights[t] * sum_{n,d} (pred - target)^2` for `[T, N, D]` inputs.
    pub fn weighted_sq_error(&mut self, pred: Var, target: Var, weights: &[f64]) -> Result<Var> {
        let (pi, ti) = (self.index(pred)?, self.index(target)?);
        let (p, t) = (&self.nodes[pi].value, &self.nodes[ti].value);
        if p.shape() != t.shape() || p.shape().len() != 3 || weights.len() != p.shape()[0] {
            return Err(shape_err(
                "weighted_sq_error",
                format!(
                    "pred {:?}, target {:?}, {} weights",
                    p.shape(),
                    t.shape(),
                    weights.len()
                ),
            ));
        }
        let value = Tensor::scalar(weighted_sq_error_value(p, t, weights));
        let op = Op::WeightedSqError {
            pred: pi,
            target: ti,
            weights: weights.to_vec(),
        };
        self.push_checked("weighted_sq_error", value, op, &[pi, ti])
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let li = self.index(loss)?;
        let lv = &self.nodes[li].value;
        if lv.numel() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[li] = Some(vec![1.0]);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        // Constants keep no gradient.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let wants = |i: usize| self.nodes[i].requires_grad;
        let mut acc = |i: usize, delta: &mut dyn Iterator<Item = (usize, f64)>| {
            let buf = grads[i].get_or_insert_with(|| vec![0.0; self.nodes[i].value.numel()]);
            for (k, d) in delta {
                buf[k] += d;
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
                cols,
            } => {
                let cg = conv::backward(geometry, cols, self.nodes[*kernel].value.data(), g);
                if wants(*input) {
                    acc(*input, &mut cg.input.iter().copied().enumerate());
                }
                if wants(*kernel) {
                    acc(*kernel, &mut cg.kernel.iter().copied().enumerate());
                }
                if wants(*bias) {
                    acc(*bias, &mut cg.bias.iter().copied().enumerate());
                }
            }
            Op::Add(a, b) => {
                for &p in [a, b].iter() {
                    if wants(*p) {
                        acc(*p, &mut g.iter().copied().enumerate());
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, &mut g.iter().copied().enumerate());
                }
                if wants(*b) {
                    acc(*b, &mut g.iter().map(|v| -v).enumerate());
                }
            }
            Op::Scale(x, f) => acc(*x, &mut g.iter().map(|v| v * f).enumerate()),
            Op::LeakyRelu(x, slope) => {
                let xv = self.nodes[*x].value.data();
                acc(
                    *x,
                    &mut g
                        .iter()
                        .zip(xv)
                        .map(|(gv, &a)| if a >= 0.0 { *gv } else { gv * slope })
                        .enumerate(),
                );
            }
            Op::Dropout(x, mask) => acc(*x, &mut g.iter().zip(mask).map(|(gv, m)| gv * m).enumerate()),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].value.numel();
                    if wants(p) {
                        acc(p, &mut g[offset..offset + n].iter().copied().enumerate());
                    }
                    offset += n;
                }
            }
            Op::SliceChannels { input, start } => {
                let plane = g.len() / node.value.shape()[0];
                let base = start * plane;
                acc(*input, &mut g.iter().enumerate().map(|(k, v)| (base + k, *v)));
            }
            Op::FrameDiff(x) => {
                let plane = g.len() / node.value.shape()[0];
                acc(*x, &mut g.iter().enumerate().map(|(k, v)| (k + plane, *v)));
                acc(*x, &mut g.iter().enumerate().map(|(k, v)| (k, -v)));
            }
            Op::Recover {
                vel,
                anchor,
                anchor_channel,
            } => {
                let steps = node.value.shape()[0];
                let plane = g.len() / steps;
                // Reverse cumulative sum of the upstream gradient.
                let mut suffix = vec![0.0; plane];
                let mut grad_vel = vec![0.0; g.len()];
                for t in (0..steps).rev() {
                    for k in 0..plane {
                        suffix[k] += g[t * plane + k];
                        grad_vel[t * plane + k] = suffix[k];
                    }
                }
                if wants(*vel) {
                    acc(*vel, &mut grad_vel.into_iter().enumerate());
                }
                if wants(*anchor) {
                    let base = anchor_channel * plane;
                    acc(*anchor, &mut suffix.into_iter().enumerate().map(|(k, v)| (base + k, v)));
                }
            }
            Op::Sum(x) => {
                let n = self.nodes[*x].value.numel();
                acc(*x, &mut (0..n).map(|k| (k, g[0])));
            }
            Op::WeightedSqError { pred, target, weights } => {
                let (p, t) = (&self.nodes[*pred].value, &self.nodes[*target].value);
                let steps = p.shape()[0];
                let plane = p.numel() / steps;
                let norm = 2.0 * g[0] / (steps * p.shape()[1]) as f64;
                let dp: Vec<f64> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .enumerate()
                    .map(|(k, (a, b))| norm * weights[k / plane] * (a - b))
                    .collect();
                if wants(*target) {
                    acc(*target, &mut dp.iter().map(|v| -v).enumerate());
                }
                if wants(*pred) {
                    acc(*pred, &mut dp.into_iter().enumerate());
                }
            }
        }
    }
}

/// Scalar value of the weighted squared error, shared by the tape op and off-tape callers.
pub(crate) fn weighted_sq_error_value(pred: &Tensor, target: &Tensor, weights: &[f64]) -> f64 {
    let steps = pred.shape()[0];
    let joints = pred.shape()[1];
    let plane = pred.numel() / steps;
    let mut total = 0.0;
    for (t, w) in weights.iter().enumerate() {
        let range = t * plane..(t + 1) * plane;
        let sq: f64 = pred.data()[range.clone()]
            .iter()
            .zip(&target.data()[range])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += w * sq;
    }
    total / (steps * joints) as f64
}
