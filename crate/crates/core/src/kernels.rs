//! Raw forward/backward kernels over flat slices.
//!
//! Everything here works on channels-last buffers. The tape in
//! [`crate::autodiff`] owns shape bookkeeping and calls into these.

use crate::error::{Error, Result};
use crate::scalar::{gemm, MatView, Scalar};

/// Stride, zero padding and group count of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Conv2dSpec {
            stride,
            padding,
            groups,
        }
    }

    /// Stride 1, "same" padding for an odd kernel, dense.
    pub const fn same(kernel: usize) -> Self {
        Conv2dSpec::new(1, kernel / 2, 1)
    }
}

/// Resolved geometry of one convolution call.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub cig: usize,
    pub cog: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// `x: [H, W, C_in]`, `w: [C_out, C_in / groups, kh, kw]`.
    pub fn new(x: &[usize], w: &[usize], spec: Conv2dSpec) -> Result<Self> {
        if x.len() != 3 || w.len() != 4 {
            return Err(Error::shape("conv2d", x, w));
        }
        let (h, wd, cin) = (x[0], x[1], x[2]);
        let (cout, cig, kh, kw) = (w[0], w[1], w[2], w[3]);
        let groups = spec.groups;
        if groups == 0 || cin % groups != 0 || cout % groups != 0 {
            return Err(Error::invalid(
                "conv2d",
                format!("{groups} groups do not divide {cin} input / {cout} output channels"),
            ));
        }
        if cig != cin / groups {
            return Err(Error::shape("conv2d", x, w));
        }
        if spec.stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if kh > h + 2 * spec.padding || kw > wd + 2 * spec.padding {
            return Err(Error::invalid(
                "conv2d",
                format!("{kh}x{kw} kernel larger than padded {h}x{wd} input"),
            ));
        }
        Ok(ConvGeom {
            h,
            w: wd,
            cin,
            cout,
            cig,
            cog: cout / groups,
            kh,
            kw,
            stride: spec.stride,
            pad: spec.padding,
            groups,
            ho: (h + 2 * spec.padding - kh) / spec.stride + 1,
            wo: (wd + 2 * spec.padding - kw) / spec.stride + 1,
        })
    }

    fn is_depthwise(&self) -> bool {
        self.cig == 1 && self.cog == 1
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0 && self.groups == 1
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cig
    }

    pub fn macs(&self) -> u64 {
        (self.ho * self.wo * self.cout * self.cig * self.kh * self.kw) as u64
    }

    /// Input coordinate hit by output `o` and kernel tap `k`, if inside the image.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = o * stride + k;
        if p < pad || p - pad >= extent {
            None
        } else {
            Some(p - pad)
        }
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, group: usize) -> Vec<T> {
    let k = g.patch_len();
    let mut cols = vec![T::zero(); g.ho * g.wo * k];
    let c0 = group * g.cig;
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &mut cols[(oy * g.wo + ox) * k..][..k];
            for ky in 0..g.kh {
                let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.pad, g.w) else {
                        continue;
                    };
                    let src = &x[(iy * g.w + ix) * g.cin + c0..][..g.cig];
                    row[(ky * g.kw + kx) * g.cig..][..g.cig].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, group: usize, dx: &mut [T]) {
    let k = g.patch_len();
    let c0 = group * g.cig;
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &cols[(oy * g.wo + ox) * k..][..k];
            for ky in 0..g.kh {
                let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.pad, g.w) else {
                        continue;
                    };
                    let dst = &mut dx[(iy * g.w + ix) * g.cin + c0..][..g.cig];
                    for (d, &s) in dst.iter_mut().zip(&row[(ky * g.kw + kx) * g.cig..][..g.cig]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Weight slice of one group rearranged to `[kh*kw*cig, cog]`.
fn weight_matrix<T: Scalar>(wt: &[T], g: &ConvGeom, group: usize) -> Vec<T> {
    let taps = g.kh * g.kw;
    let mut m = vec![T::zero(); g.patch_len() * g.cog];
    for co in 0..g.cog {
        for ci in 0..g.cig {
            for t in 0..taps {
                m[(t * g.cig + ci) * g.cog + co] = wt[((group * g.cog + co) * g.cig + ci) * taps + t];
            }
        }
    }
    m
}

fn scatter_weight_grad<T: Scalar>(dm: &[T], g: &ConvGeom, group: usize, dw: &mut [T]) {
    let taps = g.kh * g.kw;
    for co in 0..g.cog {
        for ci in 0..g.cig {
            for t in 0..taps {
                dw[((group * g.cog + co) * g.cig + ci) * taps + t] += dm[(t * g.cig + ci) * g.cog + co];
            }
        }
    }
}

/// Depthwise weights as `[kh, kw, C]` so the innermost loop runs over channels.
fn depthwise_taps<T: Scalar>(wt: &[T], g: &ConvGeom) -> Vec<T> {
    let taps = g.kh * g.kw;
    let mut out = vec![T::zero(); taps * g.cout];
    for c in 0..g.cout {
        for t in 0..taps {
            out[t * g.cout + c] = wt[c * taps + t];
        }
    }
    out
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], wt: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let pixels = g.ho * g.wo;
    let mut out = vec![T::zero(); pixels * g.cout];
    if g.is_depthwise() {
        let taps = depthwise_taps(wt, g);
        let c = g.cout;
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let dst = &mut out[(oy * g.wo + ox) * c..][..c];
                for ky in 0..g.kh {
                    let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.pad, g.w) else {
                            continue;
                        };
                        let src = &x[(iy * g.w + ix) * c..][..c];
                        let tap = &taps[(ky * g.kw + kx) * c..][..c];
                        for ((d, &s), &t) in dst.iter_mut().zip(src).zip(tap) {
                            *d += s * t;
                        }
                    }
                }
            }
        }
    } else {
        let k = g.patch_len();
        for group in 0..g.groups {
            let wm = weight_matrix(wt, g, group);
            let cv = MatView::row_major(g.cout).at(group * g.cog);
            if g.is_pointwise() {
                gemm(
                    pixels,
                    k,
                    g.cog,
                    T::one(),
                    x,
                    MatView::row_major(g.cin),
                    &wm,
                    MatView::row_major(g.cog),
                    T::zero(),
                    &mut out,
                    cv,
                );
            } else {
                let cols = im2col(x, g, group);
                gemm(
                    pixels,
                    k,
                    g.cog,
                    T::one(),
                    &cols,
                    MatView::row_major(k),
                    &wm,
                    MatView::row_major(g.cog),
                    T::zero(),
                    &mut out,
                    cv,
                );
            }
        }
    }
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(g.cout) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    out
}

/// Accumulates input and weight gradients; returns nothing for paths not requested.
pub(crate) fn conv2d_backward<T: Scalar>(
    dout: &[T],
    x: &[T],
    wt: &[T],
    g: &ConvGeom,
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
) {
    let pixels = g.ho * g.wo;
    if g.is_depthwise() {
        let c = g.cout;
        let taps = depthwise_taps(wt, g);
        let mut dtaps = dw.as_ref().map(|_| vec![T::zero(); taps.len()]);
        let mut dx = dx;
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let go = &dout[(oy * g.wo + ox) * c..][..c];
                for ky in 0..g.kh {
                    let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.pad, g.w) else {
                            continue;
                        };
                        let t = (ky * g.kw + kx) * c;
                        let base = (iy * g.w + ix) * c;
                        if let Some(dx) = dx.as_deref_mut() {
                            let dst = &mut dx[base..][..c];
                            for ((d, &gv), &tv) in dst.iter_mut().zip(go).zip(&taps[t..][..c]) {
                                *d += gv * tv;
                            }
                        }
                        if let Some(dt) = dtaps.as_mut() {
                            let src = &x[base..][..c];
                            for ((d, &gv), &sv) in dt[t..][..c].iter_mut().zip(go).zip(src) {
                                *d += gv * sv;
                            }
                        }
                    }
                }
            }
        }
        if let (Some(dw), Some(dt)) = (dw, dtaps) {
            let nt = g.kh * g.kw;
            for ch in 0..c {
                for t in 0..nt {
                    dw[ch * nt + t] += dt[t * c + ch];
                }
            }
        }
        return;
    }

    let k = g.patch_len();
    let mut dx = dx;
    let mut dw = dw;
    for group in 0..g.groups {
        let gv = MatView::row_major(g.cout).at(group * g.cog);
        let cols_owned;
        let (cols, colv): (&[T], MatView) = if g.is_pointwise() {
            (x, MatView::row_major(g.cin))
        } else {
            cols_owned = im2col(x, g, group);
            (&cols_owned, MatView::row_major(k))
        };
        if let Some(dw) = dw.as_deref_mut() {
            // dW = cols^T dout_g
            let mut dm = vec![T::zero(); k * g.cog];
            let colt = MatView {
                offset: colv.offset,
                rs: colv.cs,
                cs: colv.rs,
            };
            gemm(
                k,
                pixels,
                g.cog,
                T::one(),
                cols,
                colt,
                dout,
                gv,
                T::zero(),
                &mut dm,
                MatView::row_major(g.cog),
            );
            scatter_weight_grad(&dm, g, group, dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let wm = weight_matrix(wt, g, group);
            // dcols = dout_g W^T
            let wmt = MatView::col_major(g.cog);
            if g.is_pointwise() {
                gemm(
                    pixels,
                    g.cog,
                    k,
                    T::one(),
                    dout,
                    gv,
                    &wm,
                    wmt,
                    T::one(),
                    dx,
                    MatView::row_major(g.cin),
                );
            } else {
                let mut dcols = vec![T::zero(); pixels * k];
                gemm(
                    pixels,
                    g.cog,
                    k,
                    T::one(),
                    dout,
                    gv,
                    &wm,
                    wmt,
                    T::zero(),
                    &mut dcols,
                    MatView::row_major(k),
                );
                col2im_add(&dcols, g, group, dx);
            }
        }
    }
}

/// Sums rows of a `[rows, n]` buffer into `acc`.
pub(crate) fn sum_rows_into<T: Scalar>(src: &[T], n: usize, acc: &mut [T]) {
    for row in src.chunks_exact(n) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Space-to-depth on `[H, W, C]`: output channel `c*r*r + i*r + j` takes
/// input pixel `(y*r + i, x*r + j)` of channel `c`.
pub(crate) fn pixel_unshuffle<T: Scalar>(x: &[T], h: usize, w: usize, c: usize, r: usize) -> Vec<T> {
    let (ho, wo, co) = (h / r, w / r, c * r * r);
    let mut out = vec![T::zero(); x.len()];
    for y in 0..ho {
        for xo in 0..wo {
            let dst = &mut out[(y * wo + xo) * co..][..co];
            for i in 0..r {
                for j in 0..r {
                    let src = &x[((y * r + i) * w + xo * r + j) * c..][..c];
                    for (ch, &v) in src.iter().enumerate() {
                        dst[ch * r * r + i * r + j] = v;
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_unshuffle`]; `h, w, c` are the shuffled (input) extents.
pub(crate) fn pixel_shuffle<T: Scalar>(x: &[T], h: usize, w: usize, c: usize, r: usize) -> Vec<T> {
    let co = c / (r * r);
    let wo = w * r;
    let mut out = vec![T::zero(); x.len()];
    for y in 0..h {
        for xi in 0..w {
            let src = &x[(y * w + xi) * c..][..c];
            for i in 0..r {
                for j in 0..r {
                    let dst = &mut out[((y * r + i) * wo + xi * r + j) * co..][..co];
                    for (ch, d) in dst.iter_mut().enumerate() {
                        *d = src[ch * r * r + i * r + j];
                    }
                }
            }
        }
    }
    out
}

/// Adaptive pooling window `[start, end)` for output cell `i`.
#[inline]
pub(crate) fn pool_window(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

pub(crate) fn adaptive_avg_pool<T: Scalar>(x: &[T], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<T> {
    let mut out = vec![T::zero(); oh * ow * c];
    for oy in 0..oh {
        let (y0, y1) = pool_window(oy, h, oh);
        for ox in 0..ow {
            let (x0, x1) = pool_window(ox, w, ow);
            let dst = &mut out[(oy * ow + ox) * c..][..c];
            for y in y0..y1 {
                for xx in x0..x1 {
                    for (d, &v) in dst.iter_mut().zip(&x[(y * w + xx) * c..][..c]) {
                        *d += v;
                    }
                }
            }
            let inv = T::one() / T::lit(((y1 - y0) * (x1 - x0)) as f64);
            dst.iter_mut().for_each(|d| *d *= inv);
        }
    }
    out
}

pub(crate) fn adaptive_avg_pool_backward<T: Scalar>(
    dout: &[T],
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    for oy in 0..oh {
        let (y0, y1) = pool_window(oy, h, oh);
        for ox in 0..ow {
            let (x0, x1) = pool_window(ox, w, ow);
            let inv = T::one() / T::lit(((y1 - y0) * (x1 - x0)) as f64);
            let g = &dout[(oy * ow + ox) * c..][..c];
            for y in y0..y1 {
                for xx in x0..x1 {
                    for (d, &gv) in dx[(y * w + xx) * c..][..c].iter_mut().zip(g) {
                        *d += gv * inv;
                    }
                }
            }
        }
    }
}

/// Source taps `(i0, i1, frac)` for half-pixel-centred bilinear resampling.
fn bilinear_taps(out: usize, input: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn resize_bilinear<T: Scalar>(x: &[T], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<T> {
    let ty = bilinear_taps(oh, h);
    let tx = bilinear_taps(ow, w);
    let mut out = vec![T::zero(); oh * ow * c];
    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
            let dst = &mut out[(oy * ow + ox) * c..][..c];
            for (yy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                for (xx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                    let wgt = T::lit(wy * wx);
                    for (d, &v) in dst.iter_mut().zip(&x[(yy * w + xx) * c..][..c]) {
                        *d += wgt * v;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn resize_bilinear_backward<T: Scalar>(
    dout: &[T],
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    let ty = bilinear_taps(oh, h);
    let tx = bilinear_taps(ow, w);
    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
            let g = &dout[(oy * ow + ox) * c..][..c];
            for (yy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                for (xx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                    let wgt = T::lit(wy * wx);
                    for (d, &gv) in dx[(yy * w + xx) * c..][..c].iter_mut().zip(g) {
                        *d += wgt * gv;
                    }
                }
            }
        }
    }
}

/// Softmax over the middle extent of an `(outer, n, inner)` decomposition.
pub(crate) fn softmax<T: Scalar>(x: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    if inner == 1 {
        for (src, dst) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            let m = src.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut s = T::zero();
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = (v - m).exp();
                s += *d;
            }
            let inv = T::one() / s;
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        return out;
    }
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let m = (0..n).fold(T::neg_infinity(), |a, k| a.max(x[idx(k)]));
            let mut s = T::zero();
            for k in 0..n {
                let e = (x[idx(k)] - m).exp();
                out[idx(k)] = e;
                s += e;
            }
            for k in 0..n {
                out[idx(k)] /= s;
            }
        }
    }
    out
}

pub(crate) fn softmax_backward<T: Scalar>(y: &[T], dy: &[T], outer: usize, n: usize, inner: usize, dx: &mut [T]) {
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let dot = (0..n).fold(T::zero(), |a, k| a + dy[idx(k)] * y[idx(k)]);
            for k in 0..n {
                dx[idx(k)] += y[idx(k)] * (dy[idx(k)] - dot);
            }
        }
    }
}

/// Layer normalisation statistics: per-slice `(mean, 1/sqrt(var + eps))`.
pub(crate) fn layer_norm_stats<T: Scalar>(x: &[T], outer: usize, n: usize, inner: usize, eps: T) -> Vec<(T, T)> {
    let nf = T::lit(n as f64);
    let mut stats = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let mean = (0..n).fold(T::zero(), |a, k| a + x[idx(k)]) / nf;
            let var = (0..n).fold(T::zero(), |a, k| {
                let d = x[idx(k)] - mean;
                a + d * d
            }) / nf;
            stats.push((mean, T::one() / (var + eps).sqrt()));
        }
    }
    stats
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    stats: &[(T, T)],
    outer: usize,
    n: usize,
    inner: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let (mean, rstd) = stats[o * inner + i];
            for k in 0..n {
                let j = (o * n + k) * inner + i;
                out[j] = (x[j] - mean) * rstd * gamma[k] + beta[k];
            }
        }
    }
    out
}

pub(crate) struct LayerNormGrads<'a, T> {
    pub dx: Option<&'a mut [T]>,
    pub dgamma: Option<&'a mut [T]>,
    pub dbeta: Option<&'a mut [T]>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward<T: Scalar>(
    x: &[T],
    gamma: &[T],
    stats: &[(T, T)],
    dy: &[T],
    outer: usize,
    n: usize,
    inner: usize,
    mut grads: LayerNormGrads<'_, T>,
) {
    let nf = T::lit(n as f64);
    let mut xhat = vec![T::zero(); n];
    let mut dxhat = vec![T::zero(); n];
    for o in 0..outer {
        for i in 0..inner {
            let (mean, rstd) = stats[o * inner + i];
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for k in 0..n {
                let j = (o * n + k) * inner + i;
                xhat[k] = (x[j] - mean) * rstd;
                dxhat[k] = dy[j] * gamma[k];
                sum_d += dxhat[k];
                sum_dx += dxhat[k] * xhat[k];
                if let Some(dg) = grads.dgamma.as_deref_mut() {
                    dg[k] += dy[j] * xhat[k];
                }
                if let Some(db) = grads.dbeta.as_deref_mut() {
                    db[k] += dy[j];
                }
            }
            if let Some(dx) = grads.dx.as_deref_mut() {
                let md = sum_d / nf;
                let mdx = sum_dx / nf;
                for k in 0..n {
                    let j = (o * n + k) * inner + i;
                    dx[j] += rstd * (dxhat[k] - md - xhat[k] * mdx);
                }
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation: `0.5 x (1 + tanh(u))` with
/// `u = sqrt(2/pi) (x + 0.044715 x^3)`.
///
/// Evaluated through the equivalent `x * sigmoid(2u)`, which needs one `exp`.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    x * gelu_gate(x)
}

#[inline]
fn gelu_gate<T: Scalar>(x: T) -> T {
    let u2 = T::lit(2.0 * GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    T::one() / (T::one() + (-u2).exp())
}

#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let s = gelu_gate(x);
    let du2 = T::lit(2.0 * GELU_C) * (T::one() + T::lit(3.0 * GELU_A) * x * x);
    s + x * s * (T::one() - s) * du2
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
