use super::ops::{self, BnState};
use super::Tensor;
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which statistics a batch-norm node normalises with.
#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a> {
    /// Batch statistics; gradients flow through the mean and variance.
    Batch,
    /// Fixed running statistics.
    Running(&'a BnState),
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    Conv1d { x: Var, w: Var, b: Var, dilation: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv: Vec<f64>, batch_stats: bool },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Concat(Vec<Var>),
    Linear { x: Var, w: Var, b: Option<Var> },
    AvgPool2(Var),
    Reshape(Var),
    SpatialMean(Var),
    CosineWindow { x: Var, offsets: Vec<isize> },
    Attention { q: Var, k: Var, v: Var, p: Tensor },
    MulConst { x: Var, c: Tensor },
    Sum(Var),
    Bce { p: Var, target: Tensor, weight: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation recorded in topological order. Nodes are appended as ops
/// are applied, so every node's inputs precede it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar w.r.t. every leaf that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d_spatial(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::conv2d_spatial(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(out, Op::Conv2d { x, w, b }, rg))
    }

    pub fn conv1d_temporal(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let out = ops::conv1d_temporal(self.value(x), self.value(w), self.value(b), dilation)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(out, Op::Conv1d { x, w, b, dilation }, rg))
    }

    /// Batch norm over every axis but the last. In [`BnMode::Batch`] the
    /// batch mean and (biased) variance are returned so the caller can fold
    /// them into its running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_>,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let c = ops::bn_check(self.value(x), self.value(gamma), self.value(beta))?;
        let (xhat, inv, moments) = match mode {
            BnMode::Batch => {
                let (mean, var) = ops::channel_moments(self.value(x))?;
                let (xhat, inv) = ops::bn_normalize(self.value(x), &mean, &var);
                (xhat, inv, Some((mean, var)))
            }
            BnMode::Running(state) => {
                if state.mean.len() != c {
                    return Err(Error::shape("batch_norm", "running statistics have the wrong channel count"));
                }
                let (xhat, inv) = ops::bn_normalize(self.value(x), &state.mean, &state.var);
                (xhat, inv, None)
            }
        };
        let out = ops::bn_affine(self.value(x).shape(), &xhat, self.value(gamma).data(), self.value(beta).data());
        let rg = self.rg(&[x, gamma, beta]);
        let batch_stats = moments.is_some();
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv,
                batch_stats,
            },
            rg,
        );
        Ok((v, moments))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        let rg = self.rg(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_channels(&vals)?;
        let rg = self.rg(xs);
        Ok(self.push(out, Op::Concat(xs.to_vec()), rg))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(out, Op::Linear { x, w, b }, rg))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let out = ops::avg_pool2(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::AvgPool2(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let out = ops::spatial_mean(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SpatialMean(x), rg))
    }

    pub fn cosine_window(&mut self, x: Var, offsets: &[isize]) -> Result<Var> {
        let out = ops::cosine_window(self.value(x), offsets)?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            out,
            Op::CosineWindow {
                x,
                offsets: offsets.to_vec(),
            },
            rg,
        ))
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (out, p) = ops::attention(self.value(q), self.value(k), self.value(v))?;
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(out, Op::Attention { q, k, v, p }, rg))
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        if c.shape() != self.value(x).shape() {
            return Err(Error::shape("mul_const", format!("{:?} vs {:?}", c.shape(), self.value(x).shape())));
        }
        let xv = self.value(x);
        let out = Tensor::from_fn(xv.shape(), |i| xv.data()[i] * c.data()[i]);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::MulConst { x, c }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    /// Weighted, summed binary cross-entropy of probabilities `p` against
    /// (possibly soft) targets.
    pub fn bce(&mut self, p: Var, target: Tensor, weight: f64) -> Result<Var> {
        let out = Tensor::scalar(ops::bce_sum(self.value(p), &target, weight)?);
        let rg = self.rg(&[p]);
        Ok(self.push(out, Op::Bce { p, target, weight }, rg))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut out: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let g = Tensor::new(node.value.shape().to_vec(), g).expect("gradient matches value shape");
            match &node.op {
                Op::Leaf => {
                    out[i] = Some(g);
                }
                Op::Conv2d { x, w, b } => {
                    let need_x = self.requires_grad(*x);
                    let (gx, gw, gb) = ops::conv2d_spatial_backward(self.value(*x), self.value(*w), &g, need_x);
                    if let Some(gx) = gx {
                        self.accumulate(&mut grads, *x, gx);
                    }
                    self.accumulate(&mut grads, *w, gw);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Conv1d { x, w, b, dilation } => {
                    let need_x = self.requires_grad(*x);
                    let (gx, gw, gb) =
                        ops::conv1d_temporal_backward(self.value(*x), self.value(*w), &g, *dilation, need_x);
                    if let Some(gx) = gx {
                        self.accumulate(&mut grads, *x, gx);
                    }
                    self.accumulate(&mut grads, *w, gw);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv,
                    batch_stats,
                } => {
                    let (dx, dgamma, dbeta) =
                        ops::bn_backward(g.data(), xhat, inv, self.value(*gamma).data(), *batch_stats);
                    self.accumulate(&mut grads, *x, dx);
                    self.accumulate(&mut grads, *gamma, dgamma);
                    self.accumulate(&mut grads, *beta, dbeta);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    let d = g.data().iter().zip(xv).map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 }).collect();
                    self.accumulate(&mut grads, *x, d);
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    let d = g.data().iter().zip(y).map(|(&gv, &s)| gv * s * (1.0 - s)).collect();
                    self.accumulate(&mut grads, *x, d);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.data().to_vec());
                    self.accumulate(&mut grads, *b, g.into_data());
                }
                Op::Concat(xs) => {
                    let widths: Vec<usize> = xs.iter().map(|v| *self.value(*v).shape().last().unwrap()).collect();
                    let total: usize = widths.iter().sum();
                    let rows = g.numel() / total;
                    let mut parts: Vec<Vec<f64>> = widths.iter().map(|&c| Vec::with_capacity(rows * c)).collect();
                    for row in g.data().chunks_exact(total) {
                        let mut o = 0;
                        for (p, &c) in parts.iter_mut().zip(&widths) {
                            p.extend_from_slice(&row[o..o + c]);
                            o += c;
                        }
                    }
                    for (v, p) in xs.iter().zip(parts) {
                        self.accumulate(&mut grads, *v, p);
                    }
                }
                Op::Linear { x, w, b } => {
                    let need_x = self.requires_grad(*x);
                    let (gx, gw, gb) = ops::linear_backward(self.value(*x), self.value(*w), &g, need_x);
                    if let Some(gx) = gx {
                        self.accumulate(&mut grads, *x, gx);
                    }
                    self.accumulate(&mut grads, *w, gw);
                    if let Some(b) = b {
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AvgPool2(x) => {
                    let gx = ops::avg_pool2_backward(self.value(*x).shape(), &g);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Reshape(x) => {
                    self.accumulate(&mut grads, *x, g.into_data());
                }
                Op::SpatialMean(x) => {
                    let s = self.value(*x).shape();
                    let (hw, c) = (s[2] * s[3], s[4]);
                    let mut gx = Vec::with_capacity(self.value(*x).numel());
                    for frame in g.data().chunks_exact(c) {
                        for _ in 0..hw {
                            gx.extend(frame.iter().map(|v| v / hw as f64));
                        }
                    }
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::CosineWindow { x, offsets } => {
                    let gx = ops::cosine_window_backward(self.value(*x), offsets, &g);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Attention { q, k, v, p } => {
                    let (gq, gk, gv) =
                        ops::attention_backward(self.value(*q), self.value(*k), self.value(*v), p, &g);
                    self.accumulate(&mut grads, *q, gq);
                    self.accumulate(&mut grads, *k, gk);
                    self.accumulate(&mut grads, *v, gv);
                }
                Op::MulConst { x, c } => {
                    let d = g.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
                    self.accumulate(&mut grads, *x, d);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).numel();
                    self.accumulate(&mut grads, *x, vec![g.data()[0]; n]);
                }
                Op::Bce { p, target, weight } => {
                    let d = ops::bce_backward(self.value(*p), target, *weight, g.data()[0]);
                    self.accumulate(&mut grads, *p, d);
                }
            }
        }
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}
