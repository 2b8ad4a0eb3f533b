//! Layer kernels with exact backward passes. Activations are single `(C, H, W)` samples;
//! convolutions lower to GEMM through im2col.

use crate::error::{mismatch, Result};

use super::tensor::Tensor;

/// How a sliding kernel visits an image: `out_h`x`out_w` placements with top-left corner at
/// `(oy*stride - pad_top, ox*stride - pad_left)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    channels: usize,
    img_h: usize,
    img_w: usize,
    kernel: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col(img: &[f64], g: &Geometry) -> Vec<f64> {
    let cols = g.cols();
    let mut col = vec![0.0; g.rows() * cols];
    for c in 0..g.channels {
        let plane = &img[c * g.img_h * g.img_w..(c + 1) * g.img_h * g.img_w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.pad_top as isize;
                    if y < 0 || y >= g.img_h as isize {
                        continue;
                    }
                    let src = &plane[y as usize * g.img_w..(y as usize + 1) * g.img_w];
                    for ox in 0..g.out_w {
                        let x = (ox * g.stride + kj) as isize - g.pad_left as isize;
                        if x >= 0 && x < g.img_w as isize {
                            dst[oy * g.out_w + ox] = src[x as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-accumulates columns back into an image.
fn col2im(col: &[f64], g: &Geometry) -> Vec<f64> {
    let cols = g.cols();
    let mut img = vec![0.0; g.channels * g.img_h * g.img_w];
    for c in 0..g.channels {
        let plane = &mut img[c * g.img_h * g.img_w..(c + 1) * g.img_h * g.img_w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.pad_top as isize;
                    if y < 0 || y >= g.img_h as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.img_w..(y as usize + 1) * g.img_w];
                    for ox in 0..g.out_w {
                        let x = (ox * g.stride + kj) as isize - g.pad_left as isize;
                        if x >= 0 && x < g.img_w as isize {
                            dst[x as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    img
}

#[derive(Clone, Copy)]
enum Op {
    N,
    T,
}

/// `c = a·b + beta·c` with optional transposes; all matrices row-major and contiguous.
/// `a` is `m x k` after `ta`, `b` is `k x n` after `tb`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: Op, b: &[f64], tb: Op, beta: f64, c: &mut [f64]) {
    let (rsa, csa) = match ta {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the strides above address exactly the m*k, k*n and m*n elements of the
    // contiguous slices, whose lengths are checked in debug builds and by construction in
    // every caller.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Number of kernel placements along one axis for a padded convolution.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Cross-correlation plus bias. `x`: (C, H, W); `w`: (O, C, k, k); `b`: (O).
pub fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = conv_geometry(x, w, b, stride, pad)?;
    let o = w.shape()[0];
    let col = im2col(x.data(), &g);
    let mut out = vec![0.0; o * g.cols()];
    for (oc, row) in out.chunks_mut(g.cols()).enumerate() {
        row.fill(b.data()[oc]);
    }
    gemm(o, g.rows(), g.cols(), w.data(), Op::N, &col, Op::N, 1.0, &mut out);
    Tensor::from_vec(&[o, g.out_h, g.out_w], out)
}

fn conv_geometry(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Geometry> {
    let (c, h, wd) = x.chw()?;
    let (o, wc, k, k2) = match w.shape()[..] {
        [o, wc, k, k2] => (o, wc, k, k2),
        _ => return Err(mismatch!("conv weight must be (O, C, k, k), got {:?}", w.shape())),
    };
    if wc != c || k != k2 {
        return Err(mismatch!("conv weight {:?} against input {:?}", w.shape(), x.shape()));
    }
    if b.shape() != [o] {
        return Err(mismatch!("conv bias {:?} for {o} output channels", b.shape()));
    }
    let (Some(oh), Some(ow)) = (conv_out_size(h, k, stride, pad), conv_out_size(wd, k, stride, pad)) else {
        return Err(mismatch!("kernel {k} does not fit a {h}x{wd} input with pad {pad}"));
    };
    Ok(Geometry { channels: c, img_h: h, img_w: wd, kernel: k, stride, pad_top: pad, pad_left: pad, out_h: oh, out_w: ow })
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients of [`conv_forward`] given the upstream gradient `gy`. The input gradient is only
/// formed when `want_input` is set.
pub fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
    want_input: bool,
) -> Result<ConvGrads> {
    let g = conv_geometry(x, w, b, stride, pad)?;
    let o = w.shape()[0];
    if gy.shape() != [o, g.out_h, g.out_w] {
        return Err(mismatch!("conv output gradient {:?}, expected {:?}", gy.shape(), [o, g.out_h, g.out_w]));
    }
    let col = im2col(x.data(), &g);
    let mut gw = vec![0.0; o * g.rows()];
    gemm(o, g.cols(), g.rows(), gy.data(), Op::N, &col, Op::T, 0.0, &mut gw);
    let gb: Vec<f64> = gy.data().chunks(g.cols()).map(|r| r.iter().sum()).collect();
    let input = if want_input {
        let mut gcol = vec![0.0; g.rows() * g.cols()];
        gemm(g.rows(), o, g.cols(), w.data(), Op::T, gy.data(), Op::N, 0.0, &mut gcol);
        Some(Tensor::from_vec(x.shape(), col2im(&gcol, &g))?)
    } else {
        None
    };
    Ok(ConvGrads { input, weight: Tensor::from_vec(w.shape(), gw)?, bias: Tensor::from_vec(&[o], gb)? })
}

/// Rows/columns removed from each side of a transposed convolution's full output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct Crop {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Crop {
    pub fn uniform(c: usize) -> Self {
        Crop { top: c, bottom: c, left: c, right: c }
    }
}

/// Full (uncropped) transposed-convolution output length.
pub fn deconv_full_size(input: usize, kernel: usize, stride: usize) -> usize {
    (input - 1) * stride + kernel
}

fn deconv_geometry(x: &Tensor, w: &Tensor, stride: usize, crop: Crop) -> Result<(Geometry, usize)> {
    let (c, h, wd) = x.chw()?;
    let (wc, o, k, k2) = match w.shape()[..] {
        [wc, o, k, k2] => (wc, o, k, k2),
        _ => return Err(mismatch!("deconv weight must be (C_in, C_out, k, k), got {:?}", w.shape())),
    };
    if wc != c || k != k2 {
        return Err(mismatch!("deconv weight {:?} against input {:?}", w.shape(), x.shape()));
    }
    let (fh, fw) = (deconv_full_size(h, k, stride), deconv_full_size(wd, k, stride));
    if crop.top + crop.bottom >= fh || crop.left + crop.right >= fw {
        return Err(mismatch!("crop {crop:?} exceeds the {fh}x{fw} transposed-convolution output"));
    }
    let g = Geometry {
        channels: o,
        img_h: fh - crop.top - crop.bottom,
        img_w: fw - crop.left - crop.right,
        kernel: k,
        stride,
        pad_top: crop.top,
        pad_left: crop.left,
        out_h: h,
        out_w: wd,
    };
    Ok((g, c))
}

/// Transposed convolution (scatter-accumulate) with cropping and optional bias.
/// `x`: (C_in, H, W); `w`: (C_in, C_out, k, k); `b`: (C_out).
pub fn deconv_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, crop: Crop) -> Result<Tensor> {
    let (g, c) = deconv_geometry(x, w, stride, crop)?;
    let mut col = vec![0.0; g.rows() * g.cols()];
    gemm(g.rows(), c, g.cols(), w.data(), Op::T, x.data(), Op::N, 0.0, &mut col);
    let mut out = col2im(&col, &g);
    if let Some(b) = b {
        if b.shape() != [g.channels] {
            return Err(mismatch!("deconv bias {:?} for {} output channels", b.shape(), g.channels));
        }
        let plane = g.img_h * g.img_w;
        for (oc, p) in out.chunks_mut(plane).enumerate() {
            let bv = b.data()[oc];
            p.iter_mut().for_each(|v| *v += bv);
        }
    }
    Tensor::from_vec(&[g.channels, g.img_h, g.img_w], out)
}

#[derive(Debug, Clone)]
pub struct DeconvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn deconv_backward(x: &Tensor, w: &Tensor, gy: &Tensor, stride: usize, crop: Crop) -> Result<DeconvGrads> {
    let (g, c) = deconv_geometry(x, w, stride, crop)?;
    if gy.shape() != [g.channels, g.img_h, g.img_w] {
        return Err(mismatch!(
            "deconv output gradient {:?}, expected {:?}",
            gy.shape(),
            [g.channels, g.img_h, g.img_w]
        ));
    }
    let gcol = im2col(gy.data(), &g);
    let mut gx = vec![0.0; c * g.cols()];
    gemm(c, g.rows(), g.cols(), w.data(), Op::N, &gcol, Op::N, 0.0, &mut gx);
    let mut gw = vec![0.0; c * g.rows()];
    gemm(c, g.cols(), g.rows(), x.data(), Op::N, &gcol, Op::T, 0.0, &mut gw);
    let plane = g.img_h * g.img_w;
    let gb: Vec<f64> = gy.data().chunks(plane).map(|p| p.iter().sum()).collect();
    Ok(DeconvGrads {
        input: Tensor::from_vec(x.shape(), gx)?,
        weight: Tensor::from_vec(w.shape(), gw)?,
        bias: Tensor::from_vec(&[g.channels], gb)?,
    })
}

/// Pooled length in ceil mode: a trailing partial window is kept as long as it starts inside
/// the input.
pub fn pool_out_size(input: usize, kernel: usize, stride: usize) -> usize {
    if input <= kernel {
        return 1;
    }
    let mut out = (input - kernel).div_ceil(stride) + 1;
    if (out - 1) * stride >= input {
        out -= 1;
    }
    out
}

/// Window maximum; returns the output and, per output element, the flat input index that won
/// (first in scan order on ties).
pub fn maxpool_forward(x: &Tensor, kernel: usize, stride: usize) -> Result<(Tensor, Vec<u32>)> {
    let (c, h, w) = x.chw()?;
    let (oh, ow) = (pool_out_size(h, kernel, stride), pool_out_size(w, kernel, stride));
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    let xd = x.data();
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            let (y0, y1) = (oy * stride, (oy * stride + kernel).min(h));
            for ox in 0..ow {
                let (x0, x1) = (ox * stride, (ox * stride + kernel).min(w));
                let mut best = base + y0 * w + x0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        let i = base + y * w + xx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                out.push(xd[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, oh, ow], out)?, arg))
}

pub fn maxpool_backward(gy: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Result<Tensor> {
    if gy.len() != argmax.len() {
        return Err(mismatch!("pool gradient has {} elements for {} windows", gy.len(), argmax.len()));
    }
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(gy.data()) {
        d[i as usize] += g;
    }
    Ok(gx)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Derivative taken as 0 at 0; `y` is the forward output.
pub fn relu_backward(y: &Tensor, gy: &Tensor) -> Tensor {
    let mut gx = gy.clone();
    for (g, &v) in gx.data_mut().iter_mut().zip(y.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
    y
}

/// `y` is the forward output.
pub fn sigmoid_backward(y: &Tensor, gy: &Tensor) -> Tensor {
    let mut gx = gy.clone();
    for (g, &s) in gx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (1.0 - s);
    }
    gx
}

/// Pointwise maximum. The mask is `true` where `a` wins, ties included.
pub fn eltwise_max_forward(a: &Tensor, b: &Tensor) -> Result<(Tensor, Vec<bool>)> {
    if a.shape() != b.shape() {
        return Err(mismatch!("eltwise max of {:?} and {:?}", a.shape(), b.shape()));
    }
    let mask: Vec<bool> = a.data().iter().zip(b.data()).map(|(x, y)| x >= y).collect();
    let out = a
        .data()
        .iter()
        .zip(b.data())
        .zip(&mask)
        .map(|((&x, &y), &m)| if m { x } else { y })
        .collect();
    Ok((Tensor::from_vec(a.shape(), out)?, mask))
}

/// Routes each gradient element to the input that won.
pub fn eltwise_max_backward(gy: &Tensor, mask: &[bool]) -> (Tensor, Tensor) {
    let mut ga = Tensor::zeros(gy.shape());
    let mut gb = Tensor::zeros(gy.shape());
    for (i, (&g, &m)) in gy.data().iter().zip(mask).enumerate() {
        if m {
            ga.data_mut()[i] = g;
        } else {
            gb.data_mut()[i] = g;
        }
    }
    (ga, gb)
}
