//! Wavelet-domain super-resolution networks.
//!
//! Every model upsamples the low-resolution input with bicubic interpolation
//! and learns only a residual on top of it:
//!
//! * `dwsr`, `dwsr_dwa`: the network maps the Haar subbands of the bicubic
//!   image to subband corrections, added back in the wavelet domain before
//!   the inverse transform.
//! * `dwa_direct_dwsr`: no forward transform. A DWA layer reads the image
//!   upsampled to half the target size and the network emits 12 subband
//!   channels there; the inverse transform lifts them to full resolution where
//!   the full-size bicubic image is added.
//! * `mwcnn_mini*`: a U-Net whose down/up-sampling steps are the forward and
//!   inverse Haar transforms, with additive skips and the bicubic image as
//!   the image-space residual. The direct variant again replaces the first
//!   transform by a half-size bicubic input.
//!
//! A network whose parameters are all zero therefore reproduces the bicubic
//! baseline.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::dwa::{BoundDwa, DwaConfig, DwaParams};
use crate::error::{Error, Result};
use crate::ops::{Activation, BoundConv, ConvParams};
use crate::resize::bicubic_resize;
use crate::tensor::{Float, PaddingMode, Tensor};

/// RGB source channels.
pub const IMAGE_CHANNELS: usize = 3;
/// Haar subbands of an RGB image.
pub const WAVELET_CHANNELS: usize = 4 * IMAGE_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dwsr,
    DwsrDwa,
    DwaDirectDwsr,
    MwcnnMini,
    MwcnnMiniDwa,
    DwaDirectMwcnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Dwsr,
        ModelKind::DwsrDwa,
        ModelKind::DwaDirectDwsr,
        ModelKind::MwcnnMini,
        ModelKind::MwcnnMiniDwa,
        ModelKind::DwaDirectMwcnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dwsr => "dwsr",
            ModelKind::DwsrDwa => "dwsr_dwa",
            ModelKind::DwaDirectDwsr => "dwa_direct_dwsr",
            ModelKind::MwcnnMini => "mwcnn_mini",
            ModelKind::MwcnnMiniDwa => "mwcnn_mini_dwa",
            ModelKind::DwaDirectMwcnn => "dwa_direct_mwcnn",
        }
    }

    pub fn has_dwa(self) -> bool {
        !matches!(self, ModelKind::Dwsr | ModelKind::MwcnnMini)
    }

    /// Direct kinds skip the forward transform on the input.
    pub fn is_direct(self) -> bool {
        matches!(self, ModelKind::DwaDirectDwsr | ModelKind::DwaDirectMwcnn)
    }

    pub fn is_mwcnn(self) -> bool {
        matches!(
            self,
            ModelKind::MwcnnMini | ModelKind::MwcnnMiniDwa | ModelKind::DwaDirectMwcnn
        )
    }

    /// Channels the first layer consumes.
    pub fn input_channels(self) -> usize {
        if self.is_direct() {
            IMAGE_CHANNELS
        } else {
            WAVELET_CHANNELS
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Layers in the DWSR-family chain, the DWA layer included.
    pub depth: usize,
    pub width: usize,
    pub scale: usize,
    pub kernel: usize,
    pub padding: PaddingMode,
    /// Present exactly for DWA kinds.
    pub dwa: Option<DwaConfig>,
    pub mwcnn_levels: usize,
    pub mwcnn_block_convs: usize,
}

impl ModelConfig {
    /// Defaults: depth 10, width 64, 3x3 kernels, replicate padding, DWA with
    /// stride offset 1 and ReLU, 2 U-Net levels with 2 convs per block.
    pub fn new(kind: ModelKind, scale: usize) -> Self {
        let width = 64;
        ModelConfig {
            kind,
            depth: 10,
            width,
            scale,
            kernel: 3,
            padding: PaddingMode::Replicate,
            dwa: kind
                .has_dwa()
                .then(|| DwaConfig::new(kind.input_channels(), width, width)),
            mwcnn_levels: 2,
            mwcnn_block_convs: 2,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    /// Also resizes the DWA differential and output channels.
    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        if let Some(d) = self.dwa.as_mut() {
            d.c_f = width;
            d.c_final = width;
        }
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        if let Some(d) = self.dwa.as_mut() {
            d.stride = stride;
        }
        self
    }

    pub fn with_nonlinearity(mut self, act: Activation) -> Self {
        if let Some(d) = self.dwa.as_mut() {
            d.nonlinearity = act;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(2..=4).contains(&self.scale) {
            return bad(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.width == 0 {
            return bad("width must be >= 1".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.kind.is_mwcnn() {
            if self.mwcnn_levels == 0 || self.mwcnn_block_convs == 0 {
                return bad("U-Net needs at least one level and one conv per block".into());
            }
        } else if self.depth < 2 {
            return bad(format!("depth must be >= 2, got {}", self.depth));
        }
        match (&self.dwa, self.kind.has_dwa()) {
            (None, false) => {}
            (Some(d), true) => {
                d.validate()?;
                if d.c_in != self.kind.input_channels() || d.c_final != self.width || d.kernel != self.kernel {
                    return bad(format!(
                        "DWA config {d:?} inconsistent with {} (input {}, width {}, kernel {})",
                        self.kind,
                        self.kind.input_channels(),
                        self.width,
                        self.kernel
                    ));
                }
            }
            (Some(_), false) => return bad(format!("{} takes no DWA config", self.kind)),
            (None, true) => return bad(format!("{} requires a DWA config", self.kind)),
        }
        Ok(())
    }

    /// High-resolution sizes must be multiples of this for the pipeline to be exact.
    pub fn hr_multiple(&self) -> usize {
        let levels = if self.kind.is_mwcnn() { self.mwcnn_levels } else { 1 };
        lcm(self.scale, 1 << levels)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    /// Weight at `params[index]`, bias at `params[index + 1]`.
    Conv {
        index: usize,
        padding: PaddingMode,
        relu: bool,
    },
    /// Ten consecutive tensors in `DwaParams::convs` order.
    Dwa { index: usize, cfg: DwaConfig, relu: bool },
}

#[derive(Debug, Clone, PartialEq)]
enum Plan {
    Chain(Vec<Layer>),
    UNet {
        encoders: Vec<Vec<Layer>>,
        /// `decoders[l]` runs at level `l`; level 0 emits the subband residual.
        decoders: Vec<Vec<Layer>>,
    },
}

/// Subtracted from image values before they enter the network.
pub const INPUT_CENTRE: f64 = 0.5;

/// He-uniform gain for convolutions followed by ReLU; the linear output
/// convolution keeps the plain fan-in bound.
const HE_GAIN: f64 = 2.449_489_742_783_178;

/// Parameter list with initialization, in declaration order.
struct Builder<'a, T> {
    params: Vec<NamedTensor<T>>,
    rng: &'a mut ChaCha8Rng,
    kernel: usize,
    padding: PaddingMode,
}

impl<T: Float> Builder<'_, T> {
    fn conv(&mut self, name: String, c_in: usize, c_out: usize, relu: bool) -> Result<Layer> {
        let gain = if relu { HE_GAIN } else { 1.0 };
        let p = ConvParams::<T>::init_with_gain(c_in, c_out, self.kernel, self.padding, gain, self.rng)?;
        let index = self.params.len();
        self.params.push(NamedTensor {
            name: format!("{name}.weight"),
            value: p.weight,
        });
        self.params.push(NamedTensor {
            name: format!("{name}.bias"),
            value: p.bias,
        });
        Ok(Layer::Conv {
            index,
            padding: self.padding,
            relu,
        })
    }

    fn dwa(&mut self, name: String, cfg: DwaConfig, relu: bool) -> Result<Layer> {
        let p = DwaParams::<T>::init(&cfg, self.rng)?;
        let index = self.params.len();
        for (part, conv) in p.convs() {
            self.params.push(NamedTensor {
                name: format!("{name}.{part}.weight"),
                value: conv.weight.clone(),
            });
            self.params.push(NamedTensor {
                name: format!("{name}.{part}.bias"),
                value: conv.bias.clone(),
            });
        }
        Ok(Layer::Dwa { index, cfg, relu })
    }

    /// First layer of a block: DWA when configured, else a plain conv.
    fn entry(&mut self, name: String, c_in: usize, c_out: usize, dwa: Option<DwaConfig>) -> Result<Layer> {
        match dwa {
            Some(cfg) => self.dwa(name, cfg, true),
            None => self.conv(name, c_in, c_out, true),
        }
    }
}

/// A built network: configuration, parameters, and the layer plan that
/// references them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    config: ModelConfig,
    params: Vec<NamedTensor<T>>,
    plan: Plan,
}

/// Deterministic under `(cfg, seed)`.
pub fn build_model<T: Float>(cfg: &ModelConfig, seed: u64) -> Result<Model<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::<T> {
        params: Vec::new(),
        rng: &mut rng,
        kernel: cfg.kernel,
        padding: cfg.padding,
    };
    let w = cfg.width;
    let c_in = cfg.kind.input_channels();

    let plan = if cfg.kind.is_mwcnn() {
        let (levels, m) = (cfg.mwcnn_levels, cfg.mwcnn_block_convs);
        let mut encoders = Vec::with_capacity(levels);
        for l in 0..levels {
            let mut block = Vec::with_capacity(m);
            let block_in = if l == 0 { c_in } else { 4 * w };
            let dwa = if l == 0 { cfg.dwa } else { None };
            block.push(b.entry(format!("enc{l}.0"), block_in, w, dwa)?);
            for i in 1..m {
                block.push(b.conv(format!("enc{l}.{i}"), w, w, true)?);
            }
            encoders.push(block);
        }
        let mut decoders = vec![Vec::new(); levels];
        for l in (0..levels).rev() {
            let mut block = Vec::with_capacity(m);
            for i in 0..m - 1 {
                block.push(b.conv(format!("dec{l}.{i}"), w, w, true)?);
            }
            let out = if l == 0 { WAVELET_CHANNELS } else { 4 * w };
            block.push(b.conv(format!("dec{l}.{}", m - 1), w, out, false)?);
            decoders[l] = block;
        }
        Plan::UNet { encoders, decoders }
    } else {
        let mut chain = Vec::with_capacity(cfg.depth);
        chain.push(b.entry("body.0".into(), c_in, w, cfg.dwa)?);
        for i in 1..cfg.depth - 1 {
            chain.push(b.conv(format!("body.{i}"), w, w, true)?);
        }
        chain.push(b.conv(format!("body.{}", cfg.depth - 1), w, WAVELET_CHANNELS, false)?);
        Plan::Chain(chain)
    };

    let params = b.params;
    Ok(Model {
        config: cfg.clone(),
        params,
        plan,
    })
}

/// Output of one recorded forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardPass {
    pub output: Var,
    /// Activations after the first layer.
    pub first_layer: Var,
}

impl<T: Float> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[NamedTensor<T>] {
        &self.params
    }

    /// Replace all parameter values. Names and shapes must match.
    pub fn set_params(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape() != v.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: expected {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    v.shape()
                )));
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    pub(crate) fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params.iter_mut().map(|p| &mut p.value).collect()
    }

    pub fn zero_params(&mut self) {
        for p in &mut self.params {
            p.value = Tensor::zeros(p.value.shape());
        }
    }

    /// Exact number of trainable scalars.
    pub fn count_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Float>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            plan: self.plan.clone(),
        }
    }

    /// Record all parameters as trainable leaves, in declaration order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    fn bind_constant(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Super-resolve `lr` of shape `(n, 3, h, w)` into `(n, 3, r*h, r*w)`.
    pub fn forward(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.bind_constant(&mut tape);
        let pass = self.forward_on(&mut tape, &vars, lr)?;
        Ok(tape.value(pass.output).clone())
    }

    /// First-layer activations for `lr`.
    pub fn first_layer_features(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.bind_constant(&mut tape);
        let pass = self.forward_on(&mut tape, &vars, lr)?;
        Ok(tape.value(pass.first_layer).clone())
    }

    /// Record a forward pass using parameter handles from [`Model::bind`].
    pub fn forward_on(&self, tape: &mut Tape<T>, vars: &[Var], lr: &Tensor<T>) -> Result<ForwardPass> {
        let cfg = &self.config;
        if vars.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        if lr.channels() != IMAGE_CHANNELS {
            return Err(Error::ChannelMismatch {
                expected: IMAGE_CHANNELS,
                got: lr.channels(),
            });
        }
        let r = cfg.scale;
        let (h, w) = (lr.height(), lr.width());
        let incompatible =
            |why: &str| Error::ShapeIncompatible(format!("{}x{} input at scale {r} for {}: {why}", h, w, cfg.kind));
        let upscaled = bicubic_resize(lr, r as f64)?;
        let (th, tw) = (upscaled.height(), upscaled.width());
        if th % 2 != 0 || tw % 2 != 0 {
            return Err(incompatible("target size must be even"));
        }

        // the network sees inputs centred on mid-gray; residuals use the raw image
        let centre = T::of(INPUT_CENTRE);
        let input = if cfg.kind.is_direct() {
            let half = bicubic_resize(lr, r as f64 / 2.0)?;
            if 2 * half.height() != th || 2 * half.width() != tw {
                return Err(incompatible("half-scale input does not double to the target size"));
            }
            tape.constant(half.map(|v| v - centre))
        } else {
            let b = tape.constant(upscaled.map(|v| v - centre));
            tape.dwt2(b)?
        };

        let mut first_layer = None;
        let output = match &self.plan {
            Plan::Chain(layers) => {
                let net = run_layers(tape, vars, layers, input, &mut first_layer)?;
                if cfg.kind.is_direct() {
                    let lifted = tape.idwt2(net)?;
                    let b = tape.constant(upscaled);
                    tape.add(lifted, b)?
                } else {
                    let b = tape.constant(upscaled);
                    let bands = tape.dwt2(b)?;
                    let sum = tape.add(net, bands)?;
                    tape.idwt2(sum)?
                }
            }
            Plan::UNet { encoders, decoders } => {
                let levels = encoders.len();
                let (ih, iw) = (tape.value(input).height(), tape.value(input).width());
                let need = 1usize << (levels - 1);
                if ih % need != 0 || iw % need != 0 {
                    return Err(incompatible("U-Net levels do not divide the input"));
                }
                let mut skips = Vec::with_capacity(levels);
                let mut cur = input;
                for (l, block) in encoders.iter().enumerate() {
                    if l > 0 {
                        cur = tape.dwt2(cur)?;
                    }
                    cur = run_layers(tape, vars, block, cur, &mut first_layer)?;
                    skips.push(cur);
                }
                for l in (1..levels).rev() {
                    cur = run_layers(tape, vars, &decoders[l], cur, &mut first_layer)?;
                    cur = tape.idwt2(cur)?;
                    cur = tape.add(cur, skips[l - 1])?;
                }
                let net = run_layers(tape, vars, &decoders[0], cur, &mut first_layer)?;
                let lifted = tape.idwt2(net)?;
                let b = tape.constant(upscaled);
                tape.add(lifted, b)?
            }
        };
        Ok(ForwardPass {
            output,
            first_layer: first_layer.expect("every plan has at least one layer"),
        })
    }
}

fn run_layers<T: Float>(
    tape: &mut Tape<T>,
    vars: &[Var],
    layers: &[Layer],
    mut x: Var,
    first: &mut Option<Var>,
) -> Result<Var> {
    for layer in layers {
        x = match *layer {
            Layer::Conv { index, padding, relu } => {
                let y = tape.conv2d(x, vars[index], vars[index + 1], padding)?;
                if relu {
                    tape.relu(y)
                } else {
                    y
                }
            }
            Layer::Dwa { index, ref cfg, relu } => {
                let conv = |i: usize| BoundConv {
                    weight: vars[index + 2 * i],
                    bias: vars[index + 2 * i + 1],
                    padding: cfg.padding,
                };
                let bound = BoundDwa {
                    h_anchor: conv(0),
                    h_offset: conv(1),
                    v_anchor: conv(2),
                    v_offset: conv(3),
                    fusion: conv(4),
                };
                let y = bound.forward(tape, x, cfg)?;
                if relu {
                    tape.relu(y)
                } else {
                    y
                }
            }
        };
        first.get_or_insert(x);
    }
    Ok(x)
}
