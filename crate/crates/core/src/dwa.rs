//! The differential wavelet amplifier layer.
//!
//! Two pairs of convolutions look at the same input; the second member of
//! each pair is evaluated `s` pixels further along one axis (right for the
//! horizontal pair, down for the vertical pair) and subtracted from the
//! first:
//!
//! ```text
//! H = conv(x; h_anchor) - shift(conv(x; h_offset), dx = s)
//! V = conv(x; v_anchor) - shift(conv(x; v_offset), dy = s)
//! g = concat(x, act(concat(H, V)))
//! out = conv(g; fusion)
//! ```
//!
//! Evaluating a convolution at `(i + s, j)` is the same as shifting its
//! "same"-padded output map by `s`, which is how the offset is realised. With
//! tied pair weights and replicate padding, anything constant along the shift
//! axis cancels exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{Activation, BoundConv, ConvParams};
use crate::tensor::{Float, PaddingMode, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DwaConfig {
    pub c_in: usize,
    /// Channels of each differential map (H and V).
    pub c_f: usize,
    pub c_final: usize,
    pub kernel: usize,
    /// Stride offset between the two members of a pair.
    pub stride: usize,
    pub nonlinearity: Activation,
    pub padding: PaddingMode,
}

impl DwaConfig {
    /// 3x3 kernels, stride offset 1, ReLU, replicate padding.
    pub fn new(c_in: usize, c_f: usize, c_final: usize) -> Self {
        DwaConfig {
            c_in,
            c_f,
            c_final,
            kernel: 3,
            stride: 1,
            nonlinearity: Activation::Relu,
            padding: PaddingMode::Replicate,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_nonlinearity(mut self, nonlinearity: Activation) -> Self {
        self.nonlinearity = nonlinearity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_f == 0 || self.c_final == 0 {
            return Err(Error::InvalidConfig(format!(
                "DWA channels must be >= 1 (c_in={}, c_f={}, c_final={})",
                self.c_in, self.c_f, self.c_final
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "DWA kernel must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    /// Input channels of the fusion convolution.
    pub fn fused_channels(&self) -> usize {
        self.c_in + 2 * self.c_f
    }

    pub fn num_params(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        4 * (self.c_f * self.c_in * k2 + self.c_f) + self.c_final * self.fused_channels() * k2 + self.c_final
    }
}

/// Parameters of one DWA layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DwaParams<T = f32> {
    pub h_anchor: ConvParams<T>,
    pub h_offset: ConvParams<T>,
    pub v_anchor: ConvParams<T>,
    pub v_offset: ConvParams<T>,
    pub fusion: ConvParams<T>,
}

/// Deterministic initialization from `(config, seed)`.
pub fn dwa_init<T: Float>(config: &DwaConfig, seed: u64) -> Result<DwaParams<T>> {
    DwaParams::init(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl<T: Float> DwaParams<T> {
    pub fn init<R: Rng>(cfg: &DwaConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (k, pad) = (cfg.kernel, cfg.padding);
        let pair = |rng: &mut R| ConvParams::init(cfg.c_in, cfg.c_f, k, pad, rng);
        Ok(DwaParams {
            h_anchor: pair(rng)?,
            h_offset: pair(rng)?,
            v_anchor: pair(rng)?,
            v_offset: pair(rng)?,
            fusion: ConvParams::init(cfg.fused_channels(), cfg.c_final, k, pad, rng)?,
        })
    }

    /// The five convolutions in declaration order, with their names.
    pub fn convs(&self) -> [(&'static str, &ConvParams<T>); 5] {
        [
            ("h_anchor", &self.h_anchor),
            ("h_offset", &self.h_offset),
            ("v_anchor", &self.v_anchor),
            ("v_offset", &self.v_offset),
            ("fusion", &self.fusion),
        ]
    }

    pub fn convs_mut(&mut self) -> [&mut ConvParams<T>; 5] {
        [
            &mut self.h_anchor,
            &mut self.h_offset,
            &mut self.v_anchor,
            &mut self.v_offset,
            &mut self.fusion,
        ]
    }

    /// Tie the offset members to the anchors (`h_offset = h_anchor`,
    /// `v_offset = v_anchor`).
    pub fn tie_pairs(&mut self) {
        self.h_offset = self.h_anchor.clone();
        self.v_offset = self.v_anchor.clone();
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundDwa {
        BoundDwa {
            h_anchor: self.h_anchor.bind(tape),
            h_offset: self.h_offset.bind(tape),
            v_anchor: self.v_anchor.bind(tape),
            v_offset: self.v_offset.bind(tape),
            fusion: self.fusion.bind(tape),
        }
    }
}

/// DWA parameters recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundDwa {
    pub h_anchor: BoundConv,
    pub h_offset: BoundConv,
    pub v_anchor: BoundConv,
    pub v_offset: BoundConv,
    pub fusion: BoundConv,
}

/// Intermediate maps of one DWA evaluation.
#[derive(Debug, Clone, Copy)]
pub struct DwaMaps {
    pub horizontal: Var,
    pub vertical: Var,
    /// `x` concatenated with the activated differential maps.
    pub features: Var,
    pub out: Var,
}

impl BoundDwa {
    pub fn forward_maps<T: Float>(&self, tape: &mut Tape<T>, x: Var, cfg: &DwaConfig) -> Result<DwaMaps> {
        let c = tape.value(x).channels();
        if c != cfg.c_in {
            return Err(Error::ChannelMismatch {
                expected: cfg.c_in,
                got: c,
            });
        }
        let s = cfg.stride as isize;

        let anchor = self.h_anchor.apply(tape, x)?;
        let offset = self.h_offset.apply(tape, x)?;
        let offset = tape.shift2d(offset, s, 0, cfg.padding)?;
        let horizontal = tape.sub(anchor, offset)?;

        let anchor = self.v_anchor.apply(tape, x)?;
        let offset = self.v_offset.apply(tape, x)?;
        let offset = tape.shift2d(offset, 0, s, cfg.padding)?;
        let vertical = tape.sub(anchor, offset)?;

        let diff = tape.concat_channels(&[horizontal, vertical])?;
        let diff = tape.activation(diff, cfg.nonlinearity);
        let features = tape.concat_channels(&[x, diff])?;
        let out = self.fusion.apply(tape, features)?;
        Ok(DwaMaps {
            horizontal,
            vertical,
            features,
            out,
        })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, x: Var, cfg: &DwaConfig) -> Result<Var> {
        Ok(self.forward_maps(tape, x, cfg)?.out)
    }
}

/// Evaluate one DWA layer on a plain tensor.
pub fn dwa_forward<T: Float>(x: &Tensor<T>, p: &DwaParams<T>, cfg: &DwaConfig) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = bound.forward(&mut tape, xv, cfg)?;
    Ok(tape.value(out).clone())
}

/// Differential maps `(H, V)` for a plain tensor.
pub fn dwa_differentials<T: Float>(x: &Tensor<T>, p: &DwaParams<T>, cfg: &DwaConfig) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let maps = bound.forward_maps(&mut tape, xv, cfg)?;
    Ok((tape.value(maps.horizontal).clone(), tape.value(maps.vertical).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_input(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = DwaConfig::new(3, 16, 8);
        let a: DwaParams<f32> = dwa_init(&cfg, 11).unwrap();
        let b: DwaParams<f32> = dwa_init(&cfg, 11).unwrap();
        let c: DwaParams<f32> = dwa_init(&cfg, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.h_anchor.weight.shape(), [16, 3, 3, 3]);
        assert_eq!(a.fusion.weight.shape(), [8, 35, 3, 3]);
    }

    #[test]
    fn init_rejects_bad_config() {
        let mut cfg = DwaConfig::new(3, 16, 8);
        cfg.kernel = 4;
        assert!(matches!(dwa_init::<f32>(&cfg, 0), Err(Error::InvalidConfig(_))));
        assert!(dwa_init::<f32>(&DwaConfig::new(0, 4, 4), 0).is_err());
    }

    #[test]
    fn output_has_target_channel_count() {
        let cfg = DwaConfig::new(3, 16, 64);
        let p = dwa_init::<f32>(&cfg, 0).unwrap();
        let y = dwa_forward(&Tensor::zeros([1, 3, 24, 24]), &p, &cfg).unwrap();
        assert_eq!(y.shape(), [1, 64, 24, 24]);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let cfg = DwaConfig::new(3, 4, 4);
        let p = dwa_init::<f64>(&cfg, 0).unwrap();
        assert!(matches!(
            dwa_forward(&Tensor::zeros([1, 2, 8, 8]), &p, &cfg),
            Err(Error::ChannelMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn tied_weights_reject_constant_input() {
        let cfg = DwaConfig::new(3, 8, 5);
        let mut p = dwa_init::<f64>(&cfg, 3).unwrap();
        p.tie_pairs();
        p.fusion.weight = Tensor::zeros(p.fusion.weight.shape());
        p.fusion.bias = Tensor::full(p.fusion.bias.shape(), 0.75);
        let x = Tensor::full([2, 3, 7, 9], 0.4);
        let (h, v) = dwa_differentials(&x, &p, &cfg).unwrap();
        assert!(h.data().iter().chain(v.data()).all(|&d| d == 0.0));
        let y = dwa_forward(&x, &p, &cfg).unwrap();
        assert!(y.data().iter().all(|&d| d == 0.75));
    }

    #[test]
    fn zero_stride_with_tied_weights_cancels_any_input() {
        let cfg = DwaConfig::new(2, 4, 3).with_stride(0);
        let mut p = dwa_init::<f64>(&cfg, 5).unwrap();
        p.tie_pairs();
        let x = rand_input([1, 2, 6, 6], 1);
        let (h, v) = dwa_differentials(&x, &p, &cfg).unwrap();
        assert!(h.data().iter().chain(v.data()).all(|&d| d == 0.0));
    }

    #[test]
    fn bias_cancels_in_differential_maps() {
        // untied weights, but biases differ: H shifts by the bias gap only
        // through the weights, never through the bias
        let cfg = DwaConfig::new(1, 2, 1);
        let mut p = dwa_init::<f64>(&cfg, 8).unwrap();
        let x = rand_input([1, 1, 6, 6], 2);
        let (h0, _) = dwa_differentials(&x, &p, &cfg).unwrap();
        p.h_anchor.bias = p.h_anchor.bias.map(|b| b + 1.5);
        p.h_offset.bias = p.h_offset.bias.map(|b| b + 1.5);
        let (h1, _) = dwa_differentials(&x, &p, &cfg).unwrap();
        assert!(h0.max_abs_diff(&h1).unwrap() < 1e-12);
    }

    #[test]
    fn offset_shift_matches_direct_patch_evaluation_on_interior() {
        // H[i, j] = f(psi(x, (i, j)); a) - f(psi(x, (i, j + s)); b) away from borders
        let cfg = DwaConfig::new(1, 1, 1).with_stride(2);
        let p = dwa_init::<f64>(&cfg, 4).unwrap();
        let x = rand_input([1, 1, 8, 10], 3);
        let (h, _) = dwa_differentials(&x, &p, &cfg).unwrap();
        let patch = |c: &ConvParams<f64>, y: usize, xx: usize| {
            let mut acc = c.bias.data()[0];
            for ky in 0..3 {
                for kx in 0..3 {
                    acc += c.weight.at([0, 0, ky, kx]) * x.at([0, 0, y + ky - 1, xx + kx - 1]);
                }
            }
            acc
        };
        for y in 1..7 {
            for xx in 1..7 {
                let expect = patch(&p.h_anchor, y, xx) - patch(&p.h_offset, y, xx + 2);
                assert!((h.at([0, 0, y, xx]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn param_count_matches_tensors() {
        let cfg = DwaConfig::new(12, 16, 64);
        let p = dwa_init::<f32>(&cfg, 0).unwrap();
        let total: usize = p.convs().iter().map(|(_, c)| c.num_params()).sum();
        assert_eq!(total, cfg.num_params());
    }
}
