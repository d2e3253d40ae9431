//! Orthonormal 2-D Haar transform, applied channel-wise.
//!
//! Every non-overlapping 2x2 block `[[a, b], [c, d]]` maps to
//!
//! ```text
//! A = (a + b + c + d) / 2     H = (a - b + c - d) / 2
//! V = (a + b - c - d) / 2     D = (a - b - c + d) / 2
//! ```
//!
//! The 4x4 matrix is symmetric and orthogonal, so the same butterfly inverts
//! it and also serves as its own adjoint in the backward pass.
//!
//! Output channels are laid out in blocks `[A | H | V | D]`, each block holding
//! the source channels in order.

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// One of the four Haar subbands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subband {
    Approximation,
    Horizontal,
    Vertical,
    Diagonal,
}

impl Subband {
    pub const ALL: [Subband; 4] = [
        Subband::Approximation,
        Subband::Horizontal,
        Subband::Vertical,
        Subband::Diagonal,
    ];

    fn block(self) -> usize {
        self as usize
    }
}

/// A Haar decomposition stored as a `(n, 4c, h/2, w/2)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandStack<T = f32>(Tensor<T>);

impl<T: Float> SubbandStack<T> {
    pub fn new(t: Tensor<T>) -> Result<Self> {
        if !t.channels().is_multiple_of(4) {
            return Err(Error::ChannelNotDivisibleBy4(t.channels()));
        }
        Ok(SubbandStack(t))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    /// Number of channels in the decomposed source.
    pub fn source_channels(&self) -> usize {
        self.0.channels() / 4
    }

    /// Copy out one subband as a `(n, c, h/2, w/2)` tensor.
    pub fn band(&self, band: Subband) -> Tensor<T> {
        let [n, c4, h, w] = self.0.shape();
        let c = c4 / 4;
        Tensor::from_fn([n, c, h, w], |[b, ch, y, x]| {
            self.0.at([b, band.block() * c + ch, y, x])
        })
    }

    /// Sum of squared detail coefficients (H, V and D blocks).
    pub fn detail_energy(&self) -> T {
        [Subband::Horizontal, Subband::Vertical, Subband::Diagonal]
            .iter()
            .map(|&b| self.band(b).sum_squares())
            .sum()
    }
}

/// Single-level forward transform.
pub fn dwt2<T: Float>(x: &Tensor<T>) -> Result<SubbandStack<T>> {
    check_even(x)?;
    Ok(SubbandStack(haar_forward(x)))
}

/// Single-level inverse transform, the exact left inverse of [`dwt2`].
pub fn idwt2<T: Float>(s: &SubbandStack<T>) -> Result<Tensor<T>> {
    Ok(haar_inverse(&s.0))
}

/// Multi-level decomposition. Level `l + 1` transforms every channel of level
/// `l`, not only the approximation block.
pub fn dwt_multi<T: Float>(x: &Tensor<T>, levels: usize) -> Result<Vec<SubbandStack<T>>> {
    let f = 1usize << levels;
    if levels == 0 || !x.height().is_multiple_of(f) || !x.width().is_multiple_of(f) {
        return Err(Error::NotDivisible {
            h: x.height(),
            w: x.width(),
            levels,
        });
    }
    let mut out: Vec<SubbandStack<T>> = Vec::with_capacity(levels);
    for _ in 0..levels {
        let next = match out.last() {
            Some(prev) => haar_forward(prev.tensor()),
            None => haar_forward(x),
        };
        out.push(SubbandStack(next));
    }
    Ok(out)
}

/// Invert `levels` applications of [`dwt2`] starting from the deepest stack.
pub fn idwt_multi<T: Float>(deepest: &SubbandStack<T>, levels: usize) -> Result<Tensor<T>> {
    let mut t = deepest.0.clone();
    for _ in 0..levels {
        if !t.channels().is_multiple_of(4) {
            return Err(Error::ChannelNotDivisibleBy4(t.channels()));
        }
        t = haar_inverse(&t);
    }
    Ok(t)
}

pub(crate) fn check_even<T: Float>(x: &Tensor<T>) -> Result<()> {
    let (h, w) = (x.height(), x.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddSpatialSize { h, w });
    }
    Ok(())
}

/// Forward butterfly. Caller guarantees even spatial size.
pub(crate) fn haar_forward<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let (ho, wo) = (h / 2, w / 2);
    let half = T::of(0.5);
    let mut out = vec![T::zero(); x.len()];
    let band = c * ho * wo;
    for b in 0..n {
        let src = &x.data()[b * c * h * w..(b + 1) * c * h * w];
        let dst = &mut out[b * 4 * band..(b + 1) * 4 * band];
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for y in 0..ho {
                for xo in 0..wo {
                    let top = 2 * y * w + 2 * xo;
                    let (p, q) = (plane[top], plane[top + 1]);
                    let (r, s) = (plane[top + w], plane[top + w + 1]);
                    let o = ch * ho * wo + y * wo + xo;
                    dst[o] = (p + q + r + s) * half;
                    dst[band + o] = (p - q + r - s) * half;
                    dst[2 * band + o] = (p + q - r - s) * half;
                    dst[3 * band + o] = (p - q - r + s) * half;
                }
            }
        }
    }
    Tensor::from_parts([n, 4 * c, ho, wo], out)
}

/// Inverse butterfly. Caller guarantees channels divisible by 4.
pub(crate) fn haar_inverse<T: Float>(s: &Tensor<T>) -> Tensor<T> {
    let [n, c4, ho, wo] = s.shape();
    let c = c4 / 4;
    let (h, w) = (2 * ho, 2 * wo);
    let half = T::of(0.5);
    let band = c * ho * wo;
    let mut out = vec![T::zero(); s.len()];
    for b in 0..n {
        let src = &s.data()[b * 4 * band..(b + 1) * 4 * band];
        let dst = &mut out[b * c * h * w..(b + 1) * c * h * w];
        for ch in 0..c {
            let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
            for y in 0..ho {
                for xo in 0..wo {
                    let o = ch * ho * wo + y * wo + xo;
                    let (a, hh, v, d) = (src[o], src[band + o], src[2 * band + o], src[3 * band + o]);
                    let top = 2 * y * w + 2 * xo;
                    plane[top] = (a + hh + v + d) * half;
                    plane[top + 1] = (a - hh + v - d) * half;
                    plane[top + w] = (a + hh - v - d) * half;
                    plane[top + w + 1] = (a - hh - v + d) * half;
                }
            }
        }
    }
    Tensor::from_parts([n, c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new([1, 1, h, w], v.to_vec()).unwrap()
    }

    /// Independent 2x2 filter bank: low/high pass along rows, then columns.
    fn filter_bank_oracle(a: f64, b: f64, c: f64, d: f64) -> [f64; 4] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // row pass
        let (top_lo, top_hi) = ((a + b) * s, (a - b) * s);
        let (bot_lo, bot_hi) = ((c + d) * s, (c - d) * s);
        // column pass
        [
            (top_lo + bot_lo) * s,
            (top_hi + bot_hi) * s,
            (top_lo - bot_lo) * s,
            (top_hi - bot_hi) * s,
        ]
    }

    #[test]
    fn constant_block_has_no_detail() {
        let s = dwt2(&t(2, 2, &[1.0; 4])).unwrap();
        assert_eq!(s.tensor().data(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ramp_block_matches_filter_bank() {
        let s = dwt2(&t(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let oracle = filter_bank_oracle(1.0, 2.0, 3.0, 4.0);
        for (got, want) in s.tensor().data().iter().zip(oracle) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(s.tensor().data(), &[5.0, -1.0, -2.0, 0.0]);
    }

    #[test]
    fn inverse_of_pure_approximation() {
        let s = SubbandStack::new(Tensor::new([1, 4, 1, 1], vec![2.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        let x = idwt2(&s).unwrap();
        assert_eq!(x.data(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(dwt2(&x).unwrap(), s);
    }

    #[test]
    fn zero_subbands_give_zero_image() {
        let s = SubbandStack::new(Tensor::<f32>::zeros([2, 12, 3, 5])).unwrap();
        let x = idwt2(&s).unwrap();
        assert_eq!(x.shape(), [2, 3, 6, 10]);
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_blocks_follow_source_order() {
        // channel 1 constant 3, channel 0 constant 1
        let x = Tensor::<f64>::from_fn([1, 2, 2, 2], |[_, c, _, _]| if c == 0 { 1.0 } else { 3.0 });
        let s = dwt2(&x).unwrap();
        assert_eq!(s.band(Subband::Approximation).data(), &[2.0, 6.0]);
        assert_eq!(s.tensor().channels(), 8);
    }

    #[test]
    fn rejects_odd_sizes_and_bad_channel_counts() {
        assert!(matches!(
            dwt2(&Tensor::<f32>::zeros([1, 1, 3, 4])),
            Err(Error::OddSpatialSize { h: 3, w: 4 })
        ));
        assert!(matches!(
            SubbandStack::new(Tensor::<f32>::zeros([1, 6, 2, 2])),
            Err(Error::ChannelNotDivisibleBy4(6))
        ));
        assert!(matches!(
            dwt_multi(&Tensor::<f32>::zeros([1, 1, 6, 8]), 2),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn two_levels_on_constant_three() {
        let x = Tensor::<f64>::full([1, 1, 8, 8], 3.0);
        let levels = dwt_multi(&x, 2).unwrap();
        assert_eq!(levels[0], dwt2(&x).unwrap());
        let deep = &levels[1];
        assert_eq!(deep.tensor().shape(), [1, 16, 2, 2]);
        // level-2 approximation of the level-1 approximation block
        for (i, v) in deep.tensor().data().iter().enumerate() {
            let expect = if i < 4 { 12.0 } else { 0.0 };
            assert_eq!(*v, expect, "index {i}");
        }
    }

    #[test]
    fn multi_level_round_trip_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::<f32>::from_fn([1, 3, 16, 24], |_| rng.gen_range(-1.0..1.0));
        let levels = dwt_multi(&x, 2).unwrap();
        let back = idwt_multi(levels.last().unwrap(), 2).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-5);
    }

    #[test]
    fn area_quarters_and_channels_quadruple() {
        let x = Tensor::<f32>::zeros([2, 5, 10, 6]);
        assert_eq!(dwt2(&x).unwrap().tensor().shape(), [2, 20, 5, 3]);
    }
}
