//! Value-level tensor ops and convolution parameters.
//!
//! These evaluate directly on [`Tensor`]s without recording anything; the
//! [`Tape`](crate::autograd::Tape) wraps the same kernels when gradients are
//! needed.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{fan_in_uniform, Float, PaddingMode, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

/// Weights and bias of one `k x k` "same" convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    /// `(c_out, c_in, k, k)`
    pub weight: Tensor<T>,
    /// `(c_out, 1, 1, 1)`
    pub bias: Tensor<T>,
    pub padding: PaddingMode,
}

impl<T: Float> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, padding: PaddingMode) -> Result<Self> {
        validate_conv(&weight, &bias)?;
        Ok(ConvParams { weight, bias, padding })
    }

    /// Fan-in uniform initialization in `±sqrt(1 / (c_in * k * k))`.
    /// Weights and bias uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng>(c_in: usize, c_out: usize, k: usize, padding: PaddingMode, rng: &mut R) -> Result<Self> {
        Self::init_with_gain(c_in, c_out, k, padding, 1.0, rng)
    }

    /// Weights uniform in `±gain/sqrt(fan_in)`, bias in `±1/sqrt(fan_in)`.
    /// `gain = sqrt(6)` is He-uniform, suited to a following ReLU.
    pub fn init_with_gain<R: Rng>(
        c_in: usize,
        c_out: usize,
        k: usize,
        padding: PaddingMode,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if k.is_multiple_of(2) || k == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::InvalidConfig(format!(
                "conv {c_in}->{c_out} with kernel {k} (kernel must be odd, channels >= 1)"
            )));
        }
        let fan_in = c_in * k * k;
        let weight = fan_in_uniform([c_out, c_in, k, k], fan_in, gain, rng);
        let bias = fan_in_uniform([c_out, 1, 1, 1], fan_in, 1.0, rng);
        Ok(ConvParams { weight, bias, padding })
    }

    pub fn identity_1x1(channels: usize) -> Self {
        let weight = Tensor::from_fn(
            [channels, channels, 1, 1],
            |[o, i, _, _]| {
                if o == i {
                    T::one()
                } else {
                    T::zero()
                }
            },
        );
        ConvParams {
            weight,
            bias: Tensor::zeros([channels, 1, 1, 1]),
            padding: PaddingMode::Replicate,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }
    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }
    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Record weight and bias as trainable leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundConv {
        BoundConv {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
            padding: self.padding,
        }
    }
}

/// A [`ConvParams`] recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundConv {
    pub weight: Var,
    pub bias: Var,
    pub padding: PaddingMode,
}

impl BoundConv {
    pub fn apply<T: Float>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        tape.conv2d(x, self.weight, self.bias, self.padding)
    }
}

fn validate_conv<T: Float>(weight: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let [c_out, _, kh, kw] = weight.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "kernel must be square and odd, got {kh}x{kw}"
        )));
    }
    if bias.len() != c_out {
        return Err(Error::ShapeMismatch(format!(
            "bias has {} values for {c_out} output channels",
            bias.len()
        )));
    }
    Ok(())
}

/// "Same"-padded stride-1 convolution.
pub fn conv2d<T: Float>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    conv2d_raw(x, &p.weight, &p.bias, p.padding)
}

pub(crate) fn conv2d_raw<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    pad: PaddingMode,
) -> Result<Tensor<T>> {
    validate_conv(weight, bias)?;
    let c_in = weight.shape()[1];
    if x.channels() != c_in {
        return Err(Error::ChannelMismatch {
            expected: c_in,
            got: x.channels(),
        });
    }
    Ok(kernels::conv2d_forward(x, weight, bias, pad))
}

/// `y[i, j] = x[i + dy, j + dx]` with out-of-range reads resolved by `pad`.
///
/// Shifts up to the full map extent are accepted; beyond that the result
/// would be pure padding and the call is rejected.
pub fn shift2d<T: Float>(x: &Tensor<T>, dx: isize, dy: isize, pad: PaddingMode) -> Result<Tensor<T>> {
    let (h, w) = (x.height(), x.width());
    if dx.unsigned_abs() > w || dy.unsigned_abs() > h {
        return Err(Error::ShiftTooLarge { dx, dy, h, w });
    }
    Ok(kernels::shift_forward(x, dx, dy, pad))
}

pub fn add<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |p, q| p + q)
}

pub fn sub<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |p, q| p - q)
}

pub fn concat_channels<T: Float>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::ShapeMismatch("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.shape();
    for p in parts {
        let [pn, _, ph, pw] = p.shape();
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "concat {:?} with {:?}",
                first.shape(),
                p.shape()
            )));
        }
    }
    Ok(kernels::concat_forward(parts))
}

pub fn activation<T: Float>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Sigmoid => x.map(|v| T::one() / (T::one() + (-v).exp())),
        Activation::Tanh => x.map(|v| v.tanh()),
    }
}

pub(crate) fn activation_backward<T: Float>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    g: &Tensor<T>,
    kind: Activation,
) -> Tensor<T> {
    let d = match kind {
        Activation::Relu => x.zip_map(g, |xv, gv| if xv > T::zero() { gv } else { T::zero() }),
        Activation::Sigmoid => y.zip_map(g, |yv, gv| gv * yv * (T::one() - yv)),
        Activation::Tanh => y.zip_map(g, |yv, gv| gv * (T::one() - yv * yv)),
    };
    d.expect("activation shapes agree")
}
