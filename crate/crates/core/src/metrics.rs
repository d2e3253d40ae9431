//! PSNR, SSIM and luma conversion.
//!
//! Inputs are clamped to `[0, 1]` before scoring. SSIM uses the standard
//! 11x11 Gaussian window (sigma 1.5) over valid positions with
//! `C1 = 0.01^2`, `C2 = 0.03^2`, averaged over every channel plane.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Which representation metrics are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChannel {
    #[default]
    Rgb,
    /// Rec.601 luma.
    Y,
}

impl FromStr for MetricChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(MetricChannel::Rgb),
            "y" => Ok(MetricChannel::Y),
            other => Err(Error::InvalidConfig(format!("unknown metric channel `{other}`"))),
        }
    }
}

fn clamped<T: Float>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64().clamp(0.0, 1.0)).collect()
}

pub fn mse<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.expect_same_shape(b)?;
    let (x, y) = (clamped(a), clamped(b));
    let sum: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(sum / x.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical inputs.
pub fn psnr<T: Float>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let centre = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - centre;
        *v = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Separable valid-mode filtering of one `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64; WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = (0..WINDOW).map(|k| plane[y * w + x + k] * win[k]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..WINDOW).map(|k| rows[(y + k) * wo + x] * win[k]).sum();
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, win: &[f64; WINDOW]) -> f64 {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mu_x = filter_valid(x, h, w, win);
    let mu_y = filter_valid(y, h, w, win);
    let e_xx = filter_valid(&xx, h, w, win);
    let e_yy = filter_valid(&yy, h, w, win);
    let e_xy = filter_valid(&xy, h, w, win);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + C1) * (2.0 * cov + C2);
        let den = (mx * mx + my * my + C1) * (var_x + var_y + C2);
        total += num / den;
    }
    total / mu_x.len() as f64
}

/// Mean structural similarity over all `(n, c)` planes.
pub fn ssim<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.expect_same_shape(b)?;
    let [_, _, h, w] = a.shape();
    if h < WINDOW || w < WINDOW {
        return Err(Error::TooSmall { h, w });
    }
    let win = gaussian_window();
    let (x, y) = (clamped(a), clamped(b));
    let planes: Vec<f64> = x
        .chunks_exact(h * w)
        .zip(y.chunks_exact(h * w))
        .map(|(p, q)| ssim_plane(p, q, h, w, &win))
        .collect();
    Ok(planes.iter().sum::<f64>() / planes.len() as f64)
}

/// Rec.601 luma: `0.299 R + 0.587 G + 0.114 B`.
pub fn to_luma<T: Float>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = img.shape();
    if c != 3 {
        return Err(Error::ChannelMismatch { expected: 3, got: c });
    }
    let (wr, wg, wb) = (T::of(0.299), T::of(0.587), T::of(0.114));
    Ok(Tensor::from_fn([n, 1, h, w], |[b, _, y, x]| {
        wr * img.at([b, 0, y, x]) + wg * img.at([b, 1, y, x]) + wb * img.at([b, 2, y, x])
    }))
}

/// PSNR (peak 1) and SSIM on the chosen channel, after removing `crop`
/// pixels from every border.
pub fn score<T: Float>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    channel: MetricChannel,
    crop: usize,
) -> Result<(f64, f64)> {
    pred.expect_same_shape(target)?;
    let (mut p, mut t) = (pred.clone(), target.clone());
    if crop > 0 {
        let [_, _, h, w] = p.shape();
        if 2 * crop >= h || 2 * crop >= w {
            return Err(Error::TooSmall { h, w });
        }
        p = p.crop(crop, crop, h - 2 * crop, w - 2 * crop)?;
        t = t.crop(crop, crop, h - 2 * crop, w - 2 * crop)?;
    }
    if channel == MetricChannel::Y {
        p = to_luma(&p)?;
        t = to_luma(&t)?;
    }
    Ok((psnr(&p, &t, 1.0)?, ssim(&p, &t)?))
}
