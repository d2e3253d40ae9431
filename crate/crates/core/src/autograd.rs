//! Reverse-mode differentiation over a linear tape.
//!
//! Each forward op appends a node holding its output value and the inputs
//! it read. [`Tape::backward`] walks the nodes in reverse, accumulating
//! vector-Jacobian products into the nodes that require gradients. A tape
//! is confined to one thread and one forward/backward pass.

use crate::error::{Error, Result};
use crate::kernels;
use crate::ops::Activation;
use crate::tensor::{Float, PaddingMode, Tensor};
use crate::wavelet;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
        weight: Var,
        bias: Var,
        pad: PaddingMode,
    },
    Shift {
        x: Var,
        dx: isize,
        dy: isize,
        pad: PaddingMode,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Act(Var, Activation),
    Dwt(Var),
    Idwt(Var),
    Sum(Var),
    Mean(Var),
    L1 {
        pred: Var,
        target: Var,
    },
    L2 {
        pred: Var,
        target: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<T: Float = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a tensor that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Record a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Which inputs of the non-smooth ops (ReLU, L1) sit on the positive
    /// side. Two evaluations with equal patterns lie on the same smooth piece.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Act(x, Activation::Relu) => out.extend(self.value(x).data().iter().map(|&v| v > T::zero())),
                Op::L1 { pred, target } => out.extend(
                    self.value(pred)
                        .data()
                        .iter()
                        .zip(self.value(target).data())
                        .map(|(&p, &t)| p > t),
                ),
                _ => {}
            }
        }
        out
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        debug_assert!(
            value.is_finite(),
            "non-finite value produced by {op:?} at node {}",
            self.nodes.len()
        );
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, pad: PaddingMode) -> Result<Var> {
        let out = crate::ops::conv2d_raw(self.value(x), self.value(weight), self.value(bias), pad)?;
        let rg = self.any_grad(&[x, weight, bias]);
        Ok(self.push(out, Op::Conv2d { x, weight, bias, pad }, rg))
    }

    pub fn shift2d(&mut self, x: Var, dx: isize, dy: isize, pad: PaddingMode) -> Result<Var> {
        let out = crate::ops::shift2d(self.value(x), dx, dy, pad)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Shift { x, dx, dy, pad }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |p, q| p - q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let kt = T::of(k);
        let out = self.value(x).map(|v| v * kt);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Scale(x, k), rg)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = crate::ops::concat_channels(&values)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = crate::ops::activation(self.value(x), kind);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Act(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn dwt2(&mut self, x: Var) -> Result<Var> {
        let out = wavelet::dwt2(self.value(x))?.into_tensor();
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Dwt(x), rg))
    }

    pub fn idwt2(&mut self, x: Var) -> Result<Var> {
        let c = self.value(x).channels();
        if !c.is_multiple_of(4) {
            return Err(Error::ChannelNotDivisibleBy4(c));
        }
        let out = wavelet::haar_inverse(self.value(x));
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Idwt(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: T = v.data().iter().copied().sum::<T>() / T::of(v.len() as f64);
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        p.expect_same_shape(t)?;
        let n = T::of(p.len() as f64);
        let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor::scalar(s / n), Op::L1 { pred, target }, rg))
    }

    /// Mean squared error.
    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        p.expect_same_shape(t)?;
        let n = T::of(p.len() as f64);
        let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor::scalar(s / n), Op::L2 { pred, target }, rg))
    }

    /// Propagate `d loss / d node` back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != [1, 1, 1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match *op {
            Op::Leaf => {}
            Op::Conv2d { x, weight, bias, pad } => {
                let cg =
                    kernels::conv2d_backward(self.value(x), self.value(weight), pad, g, [rg(x), rg(weight), rg(bias)]);
                if let Some(d) = cg.x {
                    self.accumulate(grads, x, d);
                }
                if let Some(d) = cg.weight {
                    self.accumulate(grads, weight, d);
                }
                if let Some(d) = cg.bias {
                    let d = Tensor::from_parts(self.value(bias).shape(), d.into_data());
                    self.accumulate(grads, bias, d);
                }
            }
            Op::Shift { x, dx, dy, pad } => {
                self.accumulate(grads, x, kernels::shift_backward(g, dx, dy, pad));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                if rg(b) {
                    self.accumulate(grads, b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if rg(a) {
                    let d = g
                        .zip_map(self.value(b), |p, q| p * q)
                        .expect("shape checked in forward");
                    self.accumulate(grads, a, d);
                }
                if rg(b) {
                    let d = g
                        .zip_map(self.value(a), |p, q| p * q)
                        .expect("shape checked in forward");
                    self.accumulate(grads, b, d);
                }
            }
            Op::Scale(x, k) => {
                let kt = T::of(k);
                self.accumulate(grads, x, g.map(|v| v * kt));
            }
            Op::Concat(ref parts) => {
                let channels: Vec<usize> = parts.iter().map(|&p| self.value(p).channels()).collect();
                for (&p, d) in parts.iter().zip(kernels::concat_backward(g, &channels)) {
                    self.accumulate(grads, p, d);
                }
            }
            Op::Act(x, kind) => {
                let d = crate::ops::activation_backward(self.value(x), out, g, kind);
                self.accumulate(grads, x, d);
            }
            Op::Dwt(x) => self.accumulate(grads, x, wavelet::haar_inverse(g)),
            Op::Idwt(x) => self.accumulate(grads, x, wavelet::haar_forward(g)),
            Op::Sum(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, x, Tensor::full(self.value(x).shape(), gv));
            }
            Op::Mean(x) => {
                let xv = self.value(x);
                let gv = g.data()[0] / T::of(xv.len() as f64);
                self.accumulate(grads, x, Tensor::full(xv.shape(), gv));
            }
            Op::L1 { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let k = g.data()[0] / T::of(p.len() as f64);
                // subgradient 0 at exact ties
                let d = p
                    .zip_map(t, |a, b| {
                        if a > b {
                            k
                        } else if a < b {
                            -k
                        } else {
                            T::zero()
                        }
                    })
                    .expect("shape checked in forward");
                if rg(target) {
                    self.accumulate(grads, target, d.map(|v| -v));
                }
                self.accumulate(grads, pred, d);
            }
            Op::L2 { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let k = T::of(2.0) * g.data()[0] / T::of(p.len() as f64);
                let d = p.zip_map(t, |a, b| (a - b) * k).expect("shape checked in forward");
                if rg(target) {
                    self.accumulate(grads, target, d.map(|v| -v));
                }
                self.accumulate(grads, pred, d);
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<[usize; 4]>,
}

impl<T: Float> Gradients<T> {
    /// Gradient with respect to `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }

    /// `true` when some gradient flowed into `v`.
    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}
