//! Raw forward/backward kernels shared by the tape and the value-level ops.

use crate::tensor::{Float, PaddingMode, Tensor};

const PAD: usize = usize::MAX;

/// For each kernel tap and output pixel, the flat source pixel index within
/// one `h x w` plane, or `PAD` for zero-padded reads.
///
/// Layout: `table[tap * h * w + y * w + x]` with `tap = ky * k + kx`.
fn patch_table(h: usize, w: usize, k: usize, pad: PaddingMode) -> Vec<usize> {
    let r = (k / 2) as isize;
    let mut table = Vec::with_capacity(k * k * h * w);
    for ky in 0..k as isize {
        for kx in 0..k as isize {
            for y in 0..h as isize {
                let sy = pad.resolve(y + ky - r, h);
                for x in 0..w as isize {
                    let sx = pad.resolve(x + kx - r, w);
                    table.push(match (sy, sx) {
                        (Some(sy), Some(sx)) => sy * w + sx,
                        _ => PAD,
                    });
                }
            }
        }
    }
    table
}

fn im2col<T: Float>(plane: &[T], c: usize, hw: usize, kk: usize, table: &[usize], cols: &mut [T]) {
    for ci in 0..c {
        let src = &plane[ci * hw..(ci + 1) * hw];
        for tap in 0..kk {
            let row = &mut cols[(ci * kk + tap) * hw..(ci * kk + tap + 1) * hw];
            let idx = &table[tap * hw..(tap + 1) * hw];
            for (dst, &s) in row.iter_mut().zip(idx) {
                *dst = if s == PAD { T::zero() } else { src[s] };
            }
        }
    }
}

fn col2im<T: Float>(cols: &[T], c: usize, hw: usize, kk: usize, table: &[usize], plane: &mut [T]) {
    for ci in 0..c {
        let dst = &mut plane[ci * hw..(ci + 1) * hw];
        for tap in 0..kk {
            let row = &cols[(ci * kk + tap) * hw..(ci * kk + tap + 1) * hw];
            let idx = &table[tap * hw..(tap + 1) * hw];
            for (&g, &s) in row.iter().zip(idx) {
                if s != PAD {
                    dst[s] += g;
                }
            }
        }
    }
}

/// "Same" convolution, stride 1. `weight` is `(c_out, c_in, k, k)`, `bias`
/// holds `c_out` values. Shapes are validated by the caller.
pub(crate) fn conv2d_forward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    pad: PaddingMode,
) -> Tensor<T> {
    let [n, c_in, h, w] = x.shape();
    let [c_out, _, k, _] = weight.shape();
    let (hw, kk) = (h * w, k * k);
    let table = patch_table(h, w, k, pad);
    let mut cols = vec![T::zero(); c_in * kk * hw];
    let mut out = Vec::with_capacity(n * c_out * hw);
    for b in 0..n {
        im2col(
            &x.data()[b * c_in * hw..(b + 1) * c_in * hw],
            c_in,
            hw,
            kk,
            &table,
            &mut cols,
        );
        let start = out.len();
        for &bv in bias.data() {
            out.extend(std::iter::repeat_n(bv, hw));
        }
        T::gemm(
            c_out,
            c_in * kk,
            hw,
            T::one(),
            weight.data(),
            ((c_in * kk) as isize, 1),
            &cols,
            (hw as isize, 1),
            T::one(),
            &mut out[start..],
            (hw as isize, 1),
        );
    }
    Tensor::from_parts([n, c_out, h, w], out)
}

pub(crate) struct ConvGrads<T> {
    pub x: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    pad: PaddingMode,
    dy: &Tensor<T>,
    need: [bool; 3],
) -> ConvGrads<T> {
    let [n, c_in, h, w] = x.shape();
    let [c_out, _, k, _] = weight.shape();
    let (hw, kk) = (h * w, k * k);
    let ckk = c_in * kk;
    let table = patch_table(h, w, k, pad);
    let [need_x, need_w, need_b] = need;

    let mut dx = need_x.then(|| vec![T::zero(); n * c_in * hw]);
    let mut dw = need_w.then(|| vec![T::zero(); c_out * ckk]);
    let mut db = need_b.then(|| vec![T::zero(); c_out]);
    let mut cols = vec![T::zero(); ckk * hw];

    for b in 0..n {
        let g = &dy.data()[b * c_out * hw..(b + 1) * c_out * hw];
        if let Some(db) = db.as_mut() {
            for (co, acc) in db.iter_mut().enumerate() {
                *acc += g[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            im2col(
                &x.data()[b * c_in * hw..(b + 1) * c_in * hw],
                c_in,
                hw,
                kk,
                &table,
                &mut cols,
            );
            T::gemm(
                c_out,
                hw,
                ckk,
                T::one(),
                g,
                (hw as isize, 1),
                &cols,
                (1, hw as isize),
                T::one(),
                dw,
                (ckk as isize, 1),
            );
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(
                ckk,
                c_out,
                hw,
                T::one(),
                weight.data(),
                (1, ckk as isize),
                g,
                (hw as isize, 1),
                T::zero(),
                &mut cols,
                (hw as isize, 1),
            );
            col2im(&cols, c_in, hw, kk, &table, &mut dx[b * c_in * hw..(b + 1) * c_in * hw]);
        }
    }
    ConvGrads {
        x: dx.map(|d| Tensor::from_parts(x.shape(), d)),
        weight: dw.map(|d| Tensor::from_parts(weight.shape(), d)),
        bias: db.map(|d| Tensor::from_parts([c_out, 1, 1, 1], d)),
    }
}

/// `y[i, j] = x[i + dy, j + dx]`, out-of-range reads resolved by `pad`.
pub(crate) fn shift_forward<T: Float>(x: &Tensor<T>, dx: isize, dy: isize, pad: PaddingMode) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut out = Vec::with_capacity(x.len());
    for plane in x.data().chunks_exact(h * w) {
        for y in 0..h {
            let sy = pad.resolve(y as isize + dy, h);
            for xx in 0..w {
                let sx = pad.resolve(xx as isize + dx, w);
                out.push(match (sy, sx) {
                    (Some(sy), Some(sx)) => plane[sy * w + sx],
                    _ => T::zero(),
                });
            }
        }
    }
    Tensor::from_parts([n, c, h, w], out)
}

pub(crate) fn shift_backward<T: Float>(g: &Tensor<T>, dx: isize, dy: isize, pad: PaddingMode) -> Tensor<T> {
    let [n, c, h, w] = g.shape();
    let mut out = vec![T::zero(); g.len()];
    for (gp, op) in g.data().chunks_exact(h * w).zip(out.chunks_exact_mut(h * w)) {
        for y in 0..h {
            let sy = pad.resolve(y as isize + dy, h);
            for xx in 0..w {
                let sx = pad.resolve(xx as isize + dx, w);
                if let (Some(sy), Some(sx)) = (sy, sx) {
                    op[sy * w + sx] += gp[y * w + xx];
                }
            }
        }
    }
    Tensor::from_parts([n, c, h, w], out)
}

/// Concatenate along the channel axis. Inputs share `(n, h, w)`.
pub(crate) fn concat_forward<T: Float>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let [n, _, h, w] = parts[0].shape();
    let hw = h * w;
    let c_total: usize = parts.iter().map(|p| p.channels()).sum();
    let mut out = Vec::with_capacity(n * c_total * hw);
    for b in 0..n {
        for p in parts {
            let c = p.channels();
            out.extend_from_slice(&p.data()[b * c * hw..(b + 1) * c * hw]);
        }
    }
    Tensor::from_parts([n, c_total, h, w], out)
}

/// Split a channel-concatenated gradient back into per-part gradients.
pub(crate) fn concat_backward<T: Float>(g: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let [n, c_total, h, w] = g.shape();
    let hw = h * w;
    let mut parts: Vec<Vec<T>> = channels.iter().map(|c| Vec::with_capacity(n * c * hw)).collect();
    for b in 0..n {
        let mut offset = b * c_total * hw;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&g.data()[offset..offset + c * hw]);
            offset += c * hw;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(d, &c)| Tensor::from_parts([n, c, h, w], d))
        .collect()
}
