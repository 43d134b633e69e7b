//! Convolution, transposed convolution and bilinear resampling kernels.
//!
//! Both convolutions lower to one GEMM per batch item through an im2col
//! buffer. The transposed convolution is implemented as the exact adjoint of
//! `conv2d` (its forward pass is conv2d's input-gradient pass and vice versa),
//! which is what makes the inner-product identity hold to rounding.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Spatial output size of a strided convolution, `None` if non-positive.
pub fn conv2d_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Spatial output size of a transposed convolution, `None` if non-positive.
pub fn conv2d_transpose_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Option<usize> {
    if stride == 0 || input == 0 {
        return None;
    }
    let full = (input - 1) * stride + kernel;
    full.checked_sub(2 * pad).filter(|&s| s > 0)
}

/// Sliding-window geometry: an image of `c × h × w` convolved with a
/// `k × k` kernel producing `oh × ow` positions.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `ox` whose input column `ox·stride + kx − pad` lies in
/// `[0, w)`.
fn valid_cols(g: &Geometry, kx: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kx).div_ceil(g.stride).min(g.ow);
    // largest ox with ox·stride + kx < w + pad
    let hi = if g.w + g.pad > kx { ((g.w + g.pad - kx - 1) / g.stride + 1).min(g.ow) } else { 0 };
    (lo, hi.max(lo))
}

fn im2col<T: Real>(img: &[T], g: &Geometry, cols: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.c {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let out = &mut cols[row * ncols..(row + 1) * ncols];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut out[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize || lo == hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let start = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (d, &v) in dst[lo..hi].iter_mut().zip(src[start..].iter().step_by(g.stride)) {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, img: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.c {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                let (lo, hi) = valid_cols(g, kx);
                if lo == hi {
                    continue;
                }
                let start = lo * g.stride + kx - g.pad;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let from = &src[oy * g.ow + lo..oy * g.ow + hi];
                    if g.stride == 1 {
                        for (d, &v) in dst[start..start + from.len()].iter_mut().zip(from) {
                            *d = *d + v;
                        }
                    } else {
                        for (d, &v) in dst[start..].iter_mut().step_by(g.stride).zip(from) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

fn view<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer sized by caller")
}

fn view_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer sized by caller")
}

fn check_bias<T: Real>(bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [1, channels, 1, 1] {
            return Err(Error::shape(format!(
                "bias {:?} does not match {channels} output channels",
                b.shape()
            )));
        }
    }
    Ok(())
}

fn add_bias<T: Real>(out: &mut [T], bias: &Tensor<T>, plane: usize) {
    let b = bias.data();
    for (chunk, i) in out.chunks_mut(plane).zip((0..b.len()).cycle()) {
        for v in chunk {
            *v = *v + b[i];
        }
    }
}

fn bias_grad<T: Real>(dout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = dout.shape();
    let plane = h * w;
    let mut db = Tensor::zeros([1, c, 1, 1]);
    for in_ in 0..n {
        for ic in 0..c {
            let base = (in_ * c + ic) * plane;
            let s: T = dout.data()[base..base + plane].iter().copied().sum();
            db.data_mut()[ic] = db.data()[ic] + s;
        }
    }
    db
}

fn conv_geometry<T: Real>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Geometry> {
    let [_, cin, h, wd] = x.shape();
    let [_, wcin, k, k2] = w.shape();
    if k != k2 {
        return Err(Error::shape(format!("non-square kernel {k}x{k2}")));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels, weights expect {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d: stride must be >= 1"));
    }
    let oh = conv2d_output_size(h, k, stride, pad);
    let ow = conv2d_output_size(wd, k, stride, pad);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Geometry { c: cin, h, w: wd, k, stride, pad, oh, ow }),
        _ => Err(Error::shape(format!(
            "conv2d: {h}x{wd} input with k={k} s={stride} p={pad} gives non-positive output"
        ))),
    }
}

/// `x: N×Cin×H×W`, `w: Cout×Cin×k×k`, `bias: 1×Cout×1×1`.
pub(crate) fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = conv_geometry(x, w, stride, pad)?;
    let cout = w.shape()[0];
    check_bias(bias, cout)?;
    let n = x.batch();
    let in_len = g.c * g.h * g.w;
    let out_len = cout * g.cols();
    let mut out = Tensor::zeros([n, cout, g.oh, g.ow]);
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { g.rows() * g.cols() }];
    let wv = view(w.data(), cout, g.rows());
    for in_ in 0..n {
        let img = &x.data()[in_ * in_len..(in_ + 1) * in_len];
        let cv = if g.is_pointwise() {
            view(img, g.rows(), g.cols())
        } else {
            im2col(img, &g, &mut cols);
            view(&cols, g.rows(), g.cols())
        };
        let dst = &mut out.data_mut()[in_ * out_len..(in_ + 1) * out_len];
        general_mat_mul(T::one(), &wv, &cv, T::zero(), &mut view_mut(dst, cout, g.cols()));
    }
    if let Some(b) = bias {
        add_bias(out.data_mut(), b, g.cols());
    }
    Ok(out)
}

/// Gradients of `conv2d_forward` w.r.t. input, weights and (optionally) bias.
pub(crate) fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    stride: usize,
    pad: usize,
    dout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Option<Tensor<T>>) {
    let g = conv_geometry(x, w, stride, pad).expect("validated in forward");
    let cout = w.shape()[0];
    let n = x.batch();
    let in_len = g.c * g.h * g.w;
    let out_len = cout * g.cols();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let wv = view(w.data(), cout, g.rows());
    for in_ in 0..n {
        let img = &x.data()[in_ * in_len..(in_ + 1) * in_len];
        let dv = view(&dout.data()[in_ * out_len..(in_ + 1) * out_len], cout, g.cols());
        // dW += dOut · colsᵀ
        {
            let cv = if g.is_pointwise() {
                view(img, g.rows(), g.cols())
            } else {
                im2col(img, &g, &mut cols);
                view(&cols, g.rows(), g.cols())
            };
            general_mat_mul(T::one(), &dv, &cv.t(), T::one(), &mut view_mut(dw.data_mut(), cout, g.rows()));
        }
        // dX = col2im(Wᵀ · dOut)
        let dimg = &mut dx.data_mut()[in_ * in_len..(in_ + 1) * in_len];
        if g.is_pointwise() {
            general_mat_mul(T::one(), &wv.t(), &dv, T::zero(), &mut view_mut(dimg, g.rows(), g.cols()));
        } else {
            general_mat_mul(T::one(), &wv.t(), &dv, T::zero(), &mut view_mut(&mut cols, g.rows(), g.cols()));
            col2im(&cols, &g, dimg);
        }
    }
    let db = has_bias.then(|| bias_grad(dout));
    (dx, dw, db)
}

fn transpose_geometry<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Geometry> {
    let [_, cin, h, wd] = x.shape();
    let [wcin, cout, k, k2] = w.shape();
    if k != k2 {
        return Err(Error::shape(format!("non-square kernel {k}x{k2}")));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d_transpose: input has {cin} channels, weights expect {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d_transpose: stride must be >= 1"));
    }
    let oh = conv2d_transpose_output_size(h, k, stride, pad);
    let ow = conv2d_transpose_output_size(wd, k, stride, pad);
    match (oh, ow) {
        // The geometry describes the *output* image seen as the input of the
        // adjoint convolution, whose positions are the transposed input pixels.
        (Some(oh), Some(ow)) => Ok(Geometry { c: cout, h: oh, w: ow, k, stride, pad, oh: h, ow: wd }),
        _ => Err(Error::shape(format!(
            "conv2d_transpose: {h}x{wd} input with k={k} s={stride} p={pad} gives non-positive output"
        ))),
    }
}

/// `x: N×Cin×H×W`, `w: Cin×Cout×k×k`, `bias: 1×Cout×1×1`.
pub(crate) fn conv2d_transpose_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = transpose_geometry(x, w, stride, pad)?;
    let cin = x.channels();
    let cout = g.c;
    check_bias(bias, cout)?;
    let n = x.batch();
    let in_len = cin * g.cols();
    let out_len = cout * g.h * g.w;
    let mut out = Tensor::zeros([n, cout, g.h, g.w]);
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let wv = view(w.data(), cin, g.rows());
    for in_ in 0..n {
        let xv = view(&x.data()[in_ * in_len..(in_ + 1) * in_len], cin, g.cols());
        general_mat_mul(T::one(), &wv.t(), &xv, T::zero(), &mut view_mut(&mut cols, g.rows(), g.cols()));
        col2im(&cols, &g, &mut out.data_mut()[in_ * out_len..(in_ + 1) * out_len]);
    }
    if let Some(b) = bias {
        add_bias(out.data_mut(), b, g.h * g.w);
    }
    Ok(out)
}

pub(crate) fn conv2d_transpose_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    stride: usize,
    pad: usize,
    dout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Option<Tensor<T>>) {
    let g = transpose_geometry(x, w, stride, pad).expect("validated in forward");
    let cin = x.channels();
    let n = x.batch();
    let in_len = cin * g.cols();
    let out_len = g.c * g.h * g.w;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let wv = view(w.data(), cin, g.rows());
    for in_ in 0..n {
        im2col(&dout.data()[in_ * out_len..(in_ + 1) * out_len], &g, &mut cols);
        let cv = view(&cols, g.rows(), g.cols());
        let xv = view(&x.data()[in_ * in_len..(in_ + 1) * in_len], cin, g.cols());
        general_mat_mul(T::one(), &xv, &cv.t(), T::one(), &mut view_mut(dw.data_mut(), cin, g.rows()));
        let dst = &mut dx.data_mut()[in_ * in_len..(in_ + 1) * in_len];
        general_mat_mul(T::one(), &wv, &cv, T::zero(), &mut view_mut(dst, cin, g.cols()));
    }
    let db = has_bias.then(|| bias_grad(dout));
    (dx, dw, db)
}

/// Source taps of half-pixel-centred linear interpolation for one axis.
fn linear_taps(input: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..input * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling by an integer factor (half-pixel centres, edge clamp).
pub(crate) fn upsample_bilinear_forward<T: Real>(x: &Tensor<T>, factor: usize) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    if factor == 1 {
        return x.clone();
    }
    let ty = linear_taps(h, factor);
    let tx = linear_taps(w, factor);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::cast(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::cast(fx);
                let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
    out
}

pub(crate) fn upsample_bilinear_backward<T: Real>(
    input_shape: [usize; 4],
    factor: usize,
    dout: &Tensor<T>,
) -> Tensor<T> {
    if factor == 1 {
        return dout.clone();
    }
    let [n, c, h, w] = input_shape;
    let ty = linear_taps(h, factor);
    let tx = linear_taps(w, factor);
    let (oh, ow) = (h * factor, w * factor);
    let mut dx = Tensor::zeros(input_shape);
    for p in 0..n * c {
        let g = &dout.data()[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::cast(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::cast(fx);
                let v = g[oy * ow + ox];
                let top = v * (T::one() - fy);
                let bot = v * fy;
                dst[y0 * w + x0] = dst[y0 * w + x0] + top * (T::one() - fx);
                dst[y0 * w + x1] = dst[y0 * w + x1] + top * fx;
                dst[y1 * w + x0] = dst[y1 * w + x0] + bot * (T::one() - fx);
                dst[y1 * w + x1] = dst[y1 * w + x1] + bot * fx;
            }
        }
    }
    dx
}
