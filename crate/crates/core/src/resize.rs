//! Separable bicubic resampling (Catmull-Rom, `a = -0.5`).
//!
//! Pixel centres are aligned at half-pixel offsets, source reads are clamped
//! to the edge, and each output's taps are normalised to sum to one. When
//! shrinking, the kernel is widened by `1/scale` so the result is
//! antialiased, the usual bicubic degradation for super-resolution data.

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

const A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and normalised weights for every output position along one
/// axis.
pub fn axis_weights(in_len: usize, out_len: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    let shrink = scale.min(1.0);
    let half_width = 2.0 / shrink;
    (0..out_len)
        .map(|i| {
            let u = (i as f64 + 0.5) / scale - 0.5;
            let first = (u - half_width).floor() as isize;
            let last = (u + half_width).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((last - first + 1) as usize);
            for j in first..=last {
                let w = shrink * cubic((u - j as f64) * shrink);
                if w == 0.0 {
                    continue;
                }
                let src = j.clamp(0, in_len as isize - 1) as usize;
                match taps.iter_mut().find(|(s, _)| *s == src) {
                    Some(t) => t.1 += w,
                    None => taps.push((src, w)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

fn output_len(len: usize, scale: f64) -> usize {
    (scale * len as f64).round() as usize
}

/// Resize every `(n, c)` plane by `scale`; output dims are `round(scale * dims)`.
pub fn bicubic_resize<T: Float>(img: &Tensor<T>, scale: f64) -> Result<Tensor<T>> {
    let [n, c, h, w] = img.shape();
    let degenerate = Error::DegenerateOutput { h, w, scale };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(degenerate);
    }
    let (ho, wo) = (output_len(h, scale), output_len(w, scale));
    if ho == 0 || wo == 0 || h == 0 || w == 0 {
        return Err(degenerate);
    }
    if ho == h && wo == w && scale == 1.0 {
        return Ok(img.clone());
    }
    let rows = axis_weights(h, ho, scale);
    let cols = axis_weights(w, wo, scale);

    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut tmp = vec![0.0f64; h * wo];
    for plane in img.data().chunks_exact(h * w) {
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, taps) in cols.iter().enumerate() {
                tmp[y * wo + x] = taps.iter().map(|&(s, wt)| row[s].as_f64() * wt).sum();
            }
        }
        for taps in &rows {
            for x in 0..wo {
                let v: f64 = taps.iter().map(|&(s, wt)| tmp[s * wo + x] * wt).sum();
                out.push(T::of(v));
            }
        }
    }
    Ok(Tensor::from_parts([n, c, ho, wo], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_interpolates_integers() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(-1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        // a = -0.5 at x = 0.5: 1.5*0.125 - 2.5*0.25 + 1
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn unit_scale_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::from_fn([1, 3, 7, 5], |_| rng.gen());
        assert_eq!(bicubic_resize(&x, 1.0).unwrap(), x);
        // the weight tables themselves also reduce to the identity
        for (i, taps) in axis_weights(6, 6, 1.0).iter().enumerate() {
            assert_eq!(taps, &vec![(i, 1.0)]);
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full([1, 2, 9, 6], 0.3);
        for scale in [0.25, 0.5, 1.5, 2.0, 3.0, 4.0] {
            let y = bicubic_resize(&x, scale).unwrap();
            assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-12), "scale {scale}");
        }
    }

    #[test]
    fn weights_are_partition_of_unity() {
        for (inl, scale) in [(10usize, 2.0), (10, 0.5), (9, 1.5), (12, 1.0 / 3.0), (5, 4.0)] {
            let out = (inl as f64 * scale).round() as usize;
            for taps in axis_weights(inl, out, scale) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ramp_doubling_matches_hand_rolled_kernel() {
        // independent evaluation: 4 taps around floor(u), clamped indices
        let ramp = [0.0, 1.0, 2.0, 3.0];
        let oracle: Vec<f64> = (0..8)
            .map(|i| {
                let u = i as f64 / 2.0 - 0.25;
                let base = u.floor() as isize;
                (base - 1..=base + 2)
                    .map(|j| ramp[j.clamp(0, 3) as usize] * cubic(u - j as f64))
                    .sum()
            })
            .collect();
        let x = Tensor::new([1, 1, 1, 4], ramp.to_vec()).unwrap();
        let y = bicubic_resize(&x, 2.0).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 8]);
        for (a, b) in y.data()[..8].iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // interior samples of a linear ramp are reproduced exactly
        assert!((oracle[3] - 1.25).abs() < 1e-12);
        assert!((oracle[4] - 1.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sizes_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        assert!(matches!(bicubic_resize(&x, 0.1), Err(Error::DegenerateOutput { .. })));
        assert!(bicubic_resize(&x, 0.0).is_err());
        assert!(bicubic_resize(&x, f64::NAN).is_err());
    }

    #[test]
    fn output_dims_round() {
        let x = Tensor::<f32>::zeros([1, 3, 16, 10]);
        assert_eq!(bicubic_resize(&x, 1.5).unwrap().shape(), [1, 3, 24, 15]);
        assert_eq!(bicubic_resize(&x, 0.5).unwrap().shape(), [1, 3, 8, 5]);
    }
}
