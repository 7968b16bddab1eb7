//! Per-sample kernels. Convolutions go through an im2col buffer so every
//! inner loop runs over a contiguous row of output positions.

use m2dl_core::Tensor4;

use crate::{Activation, Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.kw + 1
    }
    /// Patch length `c·kh·kw`.
    pub fn r(&self) -> usize {
        self.c * self.kh * self.kw
    }
    /// Output positions per channel.
    pub fn p(&self) -> usize {
        self.oh() * self.ow()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// col[r][i·ow + j] = input[c][i + p][j + q] with r = (c, p, q).
pub(crate) fn im2col(g: &ConvGeom, input: &[f64], col: &mut [f64]) {
    let (oh, ow, pp) = (g.oh(), g.ow(), g.p());
    let mut r = 0;
    for c in 0..g.c {
        for p in 0..g.kh {
            for q in 0..g.kw {
                let row = &mut col[r * pp..(r + 1) * pp];
                for i in 0..oh {
                    let src = c * g.h * g.w + (i + p) * g.w + q;
                    row[i * ow..(i + 1) * ow].copy_from_slice(&input[src..src + ow]);
                }
                r += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `dcol` back onto the input gradient.
pub(crate) fn col2im_add(g: &ConvGeom, dcol: &[f64], din: &mut [f64]) {
    let (oh, ow, pp) = (g.oh(), g.ow(), g.p());
    let mut r = 0;
    for c in 0..g.c {
        for p in 0..g.kh {
            for q in 0..g.kw {
                let row = &dcol[r * pp..(r + 1) * pp];
                for i in 0..oh {
                    let dst = c * g.h * g.w + (i + p) * g.w + q;
                    for (d, s) in din[dst..dst + ow].iter_mut().zip(&row[i * ow..(i + 1) * ow]) {
                        *d += s;
                    }
                }
                r += 1;
            }
        }
    }
}

/// Pre-activation output of one sample: `out[k] = b[k] + Σ_r w[k][r]·col[r]`.
pub(crate) fn conv_item(g: &ConvGeom, weights: &[f64], bias: &[f64], col: &[f64], out: &mut [f64]) {
    let (r_len, pp) = (g.r(), g.p());
    for k in 0..g.k {
        let o = &mut out[k * pp..(k + 1) * pp];
        o.fill(bias[k]);
        let wk = &weights[k * r_len..(k + 1) * r_len];
        for (r, &wv) in wk.iter().enumerate() {
            if wv != 0.0 {
                axpy(wv, &col[r * pp..(r + 1) * pp], o);
            }
        }
    }
}

/// Accumulates parameter gradients of one sample and, when `dcol` is given,
/// the patch-space input gradient (overwritten).
pub(crate) fn conv_item_backward(
    g: &ConvGeom,
    weights: &[f64],
    col: &[f64],
    dpre: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dcol: Option<&mut [f64]>,
) {
    let (r_len, pp) = (g.r(), g.p());
    for k in 0..g.k {
        let dk = &dpre[k * pp..(k + 1) * pp];
        db[k] += dk.iter().sum::<f64>();
        let dwk = &mut dw[k * r_len..(k + 1) * r_len];
        for (r, d) in dwk.iter_mut().enumerate() {
            *d += dot(dk, &col[r * pp..(r + 1) * pp]);
        }
    }
    if let Some(dcol) = dcol {
        dcol.fill(0.0);
        for k in 0..g.k {
            let dk = &dpre[k * pp..(k + 1) * pp];
            let wk = &weights[k * r_len..(k + 1) * r_len];
            for (r, &wv) in wk.iter().enumerate() {
                axpy(wv, dk, &mut dcol[r * pp..(r + 1) * pp]);
            }
        }
    }
}

/// 2×2/stride-2 max of one sample; `argmax` receives the winning input
/// offset of every output cell (first index on ties).
pub(crate) fn pool_item(c: usize, h: usize, w: usize, input: &[f64], out: &mut [f64], argmax: &mut [usize]) {
    let (oh, ow) = (h / 2, w / 2);
    let mut o = 0;
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let base = ch * h * w + 2 * i * w + 2 * j;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if input[cand] > input[best] {
                        best = cand;
                    }
                }
                out[o] = input[best];
                argmax[o] = best;
                o += 1;
            }
        }
    }
}

/// Valid, stride-1 convolution followed by `activation`.
/// `weights` has shape `[out_channels, in_channels, kh, kw]`.
pub fn conv_forward(input: &Tensor4, weights: &Tensor4, bias: &[f64], activation: Activation) -> Result<Tensor4> {
    let [n, c, h, w] = input.shape();
    let [k, wc, kh, kw] = weights.shape();
    if wc != c {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: format!("kernel expects {wc} input channels, input has {c}"),
        });
    }
    if bias.len() != k {
        return Err(Error::InvalidParameter {
            name: "bias",
            reason: format!("expected {k} entries, got {}", bias.len()),
        });
    }
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::KernelTooLarge {
            kernel: (kh, kw),
            input: (h, w),
        });
    }
    let g = ConvGeom { c, h, w, k, kh, kw };
    let mut out = Tensor4::zeros(n, k, g.oh(), g.ow());
    let mut col = vec![0.0; g.r() * g.p()];
    for i in 0..n {
        im2col(&g, input.item(i), &mut col);
        let o = out.item_mut(i);
        conv_item(&g, weights.as_slice(), bias, &col, o);
        for v in o.iter_mut() {
            *v = activation.apply(*v);
        }
    }
    Ok(out)
}

/// 2×2 max pooling with stride 2. The argmax map holds, for each output
/// cell, the flat offset of the selected input element.
pub fn maxpool_forward(input: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddPool { h, w });
    }
    let mut out = Tensor4::zeros(n, c, h / 2, w / 2);
    let per = out.item_len();
    let mut argmax = vec![0; n * per];
    for i in 0..n {
        let am = &mut argmax[i * per..(i + 1) * per];
        pool_item(c, h, w, input.item(i), out.item_mut(i), am);
        let shift = i * input.item_len();
        am.iter_mut().for_each(|a| *a += shift);
    }
    Ok((out, argmax))
}
