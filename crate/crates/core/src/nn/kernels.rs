//! Convolution, transposed convolution, batch-norm and dense kernels.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::{matmul, matmul_a_bt, matmul_at_b, Real};
use crate::tensor::Tensor;

/// Geometry of a strided, zero-padded sliding window over an image.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

pub(crate) fn conv_out(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (extent + 2 * padding)
        .checked_sub(kernel)
        .map(|v| v / stride + 1)
}

/// `cols[(c, ky, kx), (oy, ox)] = img[c, oy*s + ky - p, ox*s + kx - p]` (zero outside).
pub(crate) fn im2col<T: Real>(img: &[T], g: &Window, cols: &mut [T]) {
    im2col_rows(img, g, 0, g.out_h, cols);
}

/// [`im2col`] restricted to output rows `oy0..oy1`.
fn im2col_rows<T: Real>(img: &[T], g: &Window, oy0: usize, oy1: usize, cols: &mut [T]) {
    let (h, w, k, s, p) = (g.height as isize, g.width as isize, g.kernel, g.stride, g.padding as isize);
    let ncols = (oy1 - oy0) * g.out_w;
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in oy0..oy1 {
                    let iy = (oy * s + ky) as isize - p;
                    let line = &mut dst[(oy - oy0) * g.out_w..(oy - oy0 + 1) * g.out_w];
                    if iy < 0 || iy >= h {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p;
                        *v = if ix < 0 || ix >= w { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into `img`.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &Window, img: &mut [T]) {
    col2im_rows(cols, g, 0, g.out_h, img);
}

/// [`col2im`] for columns holding only output rows `oy0..oy1`.
fn col2im_rows<T: Real>(cols: &[T], g: &Window, oy0: usize, oy1: usize, img: &mut [T]) {
    let (h, w, k, s, p) = (g.height as isize, g.width as isize, g.kernel, g.stride, g.padding as isize);
    let ncols = (oy1 - oy0) * g.out_w;
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in oy0..oy1 {
                    let iy = (oy * s + ky) as isize - p;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let line = &src[(oy - oy0) * g.out_w..(oy - oy0 + 1) * g.out_w];
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * s + kx) as isize - p;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

/// Column buffers are filled a band of output rows at a time, capped at this
/// many elements, so that large images stay cache-friendly.
const BAND_ELEMENTS: usize = 1 << 18;

fn band_rows(g: &Window) -> usize {
    (BAND_ELEMENTS / (g.rows() * g.out_w).max(1)).clamp(1, g.out_h.max(1))
}

pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[c];
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Real>(gy: &[T], plane: usize, db: &mut [T]) {
    for (c, chunk) in gy.chunks(plane).enumerate() {
        db[c] = chunk.iter().fold(db[c], |a, &v| a + v);
    }
}

/// Weight `[cout, cin, k, k]`.
pub(crate) fn conv_forward<T: Real>(x: &Tensor<T>, w: &[T], b: &[T], cs: &ConvShape) -> Tensor<T> {
    let [n, _, h, wd] = x.shape();
    let oh = conv_out(h, cs.kernel, cs.stride, cs.padding).expect("validated");
    let ow = conv_out(wd, cs.kernel, cs.stride, cs.padding).expect("validated");
    let g = Window {
        channels: cs.cin,
        height: h,
        width: wd,
        kernel: cs.kernel,
        stride: cs.stride,
        padding: cs.padding,
        out_h: oh,
        out_w: ow,
    };
    let mut out = Tensor::zeros([n, cs.cout, oh, ow]);
    let band = band_rows(&g);
    let (rows, plane) = (g.rows(), g.cols());
    let mut cols = vec![T::zero(); rows * band * ow];
    for i in 0..n {
        let y = out.item_mut(i);
        for oy0 in (0..oh).step_by(band) {
            let oy1 = (oy0 + band).min(oh);
            let bn = (oy1 - oy0) * ow;
            im2col_rows(x.item(i), &g, oy0, oy1, &mut cols);
            // Output columns of the band sit at the same offset in every channel plane.
            T::gemm(
                cs.cout, rows, bn, T::one(), w, rows as isize, 1, &cols, bn as isize, 1, T::zero(),
                &mut y[oy0 * ow..], plane as isize, 1,
            );
        }
        add_bias(y, b, plane);
    }
    out
}

pub(crate) fn conv_backward<T: Real>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    w: &[T],
    cs: &ConvShape,
    param_grads: Option<(&mut [T], &mut [T])>,
) -> Tensor<T> {
    let [n, _, h, wd] = x.shape();
    let g = Window {
        channels: cs.cin,
        height: h,
        width: wd,
        kernel: cs.kernel,
        stride: cs.stride,
        padding: cs.padding,
        out_h: gy.height(),
        out_w: gy.width(),
    };
    let mut gx = Tensor::zeros(x.shape());
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let mut dcols = vec![T::zero(); g.rows() * g.cols()];
    let mut pg = param_grads;
    for i in 0..n {
        let gyi = gy.item(i);
        if let Some((dw, db)) = pg.as_mut() {
            im2col(x.item(i), &g, &mut cols);
            matmul_a_bt(cs.cout, g.cols(), g.rows(), gyi, &cols, dw, true);
            bias_grad(gyi, g.cols(), db);
        }
        matmul_at_b(g.rows(), cs.cout, g.cols(), w, gyi, &mut dcols, false);
        col2im(&dcols, &g, gx.item_mut(i));
    }
    gx
}

/// Weight `[cin, cout, k, k]`.
pub(crate) fn deconv_forward<T: Real>(x: &Tensor<T>, w: &[T], b: &[T], cs: &ConvShape) -> Tensor<T> {
    let [n, _, h, wd] = x.shape();
    let oh = (h - 1) * cs.stride + cs.kernel + cs.output_padding - 2 * cs.padding;
    let ow = (wd - 1) * cs.stride + cs.kernel + cs.output_padding - 2 * cs.padding;
    // The transposed convolution is the adjoint of a convolution over the output.
    let g = Window {
        channels: cs.cout,
        height: oh,
        width: ow,
        kernel: cs.kernel,
        stride: cs.stride,
        padding: cs.padding,
        out_h: h,
        out_w: wd,
    };
    let mut out = Tensor::zeros([n, cs.cout, oh, ow]);
    let band = band_rows(&g);
    let rows = g.rows();
    let mut cols = vec![T::zero(); rows * band * wd];
    for i in 0..n {
        let xi = x.item(i);
        let y = out.item_mut(i);
        for r0 in (0..h).step_by(band) {
            let r1 = (r0 + band).min(h);
            let bn = (r1 - r0) * wd;
            T::gemm(
                rows, cs.cin, bn, T::one(), w, 1, rows as isize, &xi[r0 * wd..], (h * wd) as isize, 1, T::zero(),
                &mut cols, bn as isize, 1,
            );
            col2im_rows(&cols, &g, r0, r1, y);
        }
        add_bias(y, b, oh * ow);
    }
    out
}

pub(crate) fn deconv_backward<T: Real>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    w: &[T],
    cs: &ConvShape,
    param_grads: Option<(&mut [T], &mut [T])>,
) -> Tensor<T> {
    let [n, _, h, wd] = x.shape();
    let g = Window {
        channels: cs.cout,
        height: gy.height(),
        width: gy.width(),
        kernel: cs.kernel,
        stride: cs.stride,
        padding: cs.padding,
        out_h: h,
        out_w: wd,
    };
    let mut gx = Tensor::zeros(x.shape());
    let mut dcols = vec![T::zero(); g.rows() * g.cols()];
    let mut pg = param_grads;
    for i in 0..n {
        let gyi = gy.item(i);
        im2col(gyi, &g, &mut dcols);
        matmul(cs.cin, g.rows(), g.cols(), w, &dcols, gx.item_mut(i), false);
        if let Some((dw, db)) = pg.as_mut() {
            matmul_a_bt(cs.cin, g.cols(), g.rows(), x.item(i), &dcols, dw, true);
            bias_grad(gyi, gy.height() * gy.width(), db);
        }
    }
    gx
}

/// Weight `[out, in]`; input flattened per batch item.
pub(crate) fn dense_forward<T: Real>(x: &Tensor<T>, w: &[T], b: &[T], out_f: usize) -> Tensor<T> {
    let n = x.batch();
    let in_f = x.item_len();
    let mut out = Tensor::zeros([n, out_f, 1, 1]);
    // y(n x out) = x(n x in) * w^T
    matmul_a_bt(n, in_f, out_f, x.data(), w, out.data_mut(), false);
    for row in out.data_mut().chunks_mut(out_f) {
        for (v, &bb) in row.iter_mut().zip(b) {
            *v = *v + bb;
        }
    }
    out
}

pub(crate) fn dense_backward<T: Real>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    w: &[T],
    out_f: usize,
    param_grads: Option<(&mut [T], &mut [T])>,
) -> Tensor<T> {
    let n = x.batch();
    let in_f = x.item_len();
    let mut gx = Tensor::zeros(x.shape());
    matmul(n, out_f, in_f, gy.data(), w, gx.data_mut(), false);
    if let Some((dw, db)) = param_grads {
        // dw(out x in) += gy^T(out x n) * x(n x in)
        matmul_at_b(out_f, n, in_f, gy.data(), x.data(), dw, true);
        for row in gy.data().chunks(out_f) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d = *d + g;
            }
        }
    }
    gx
}

/// Per-channel statistics recorded by a training-mode batch-norm forward.
#[derive(Clone, Debug)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
    pub count: usize,
}

pub(crate) const BN_EPS: f64 = 1e-5;

pub(crate) fn bn_batch_stats<T: Real>(x: &Tensor<T>) -> BnStats<T> {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let count = n * plane;
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for i in 0..n {
        for (ch, chunk) in x.item(i).chunks(plane).enumerate() {
            mean[ch] = chunk.iter().fold(mean[ch], |a, &v| a + v);
        }
    }
    let inv = T::one() / T::lit(count as f64);
    mean.iter_mut().for_each(|m| *m = *m * inv);
    for i in 0..n {
        for (ch, chunk) in x.item(i).chunks(plane).enumerate() {
            let m = mean[ch];
            var[ch] = chunk.iter().fold(var[ch], |a, &v| a + (v - m) * (v - m));
        }
    }
    var.iter_mut().for_each(|v| *v = *v * inv);
    BnStats { mean, var, count }
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`.
pub(crate) fn bn_apply<T: Real>(x: &Tensor<T>, mean: &[T], var: &[T], gamma: &[T], beta: &[T]) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let eps = T::lit(BN_EPS);
    let scale: Vec<T> = (0..c).map(|ch| gamma[ch] / (var[ch] + eps).sqrt()).collect();
    let mut out = x.clone();
    for i in 0..n {
        for (ch, chunk) in out.item_mut(i).chunks_mut(plane).enumerate() {
            let (m, s, b) = (mean[ch], scale[ch], beta[ch]);
            chunk.iter_mut().for_each(|v| *v = (*v - m) * s + b);
        }
    }
    out
}

pub(crate) fn bn_backward<T: Real>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    batch_stats: bool,
    param_grads: Option<(&mut [T], &mut [T])>,
) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let eps = T::lit(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    // Per-channel sums of gy and gy * xhat.
    let mut sum_g = vec![T::zero(); c];
    let mut sum_gx = vec![T::zero(); c];
    for i in 0..n {
        let xi = x.item(i);
        let gi = gy.item(i);
        for ch in 0..c {
            let (m, is) = (mean[ch], inv_std[ch]);
            for j in ch * plane..(ch + 1) * plane {
                sum_g[ch] = sum_g[ch] + gi[j];
                sum_gx[ch] = sum_gx[ch] + gi[j] * (xi[j] - m) * is;
            }
        }
    }
    if let Some((dgamma, dbeta)) = param_grads {
        for ch in 0..c {
            dgamma[ch] = dgamma[ch] + sum_gx[ch];
            dbeta[ch] = dbeta[ch] + sum_g[ch];
        }
    }
    let mut gx = Tensor::zeros(x.shape());
    let count = T::lit((n * plane) as f64);
    for i in 0..n {
        let xi = x.item(i);
        let gi = gy.item(i);
        let out = gx.item_mut(i);
        for ch in 0..c {
            let (m, is, g) = (mean[ch], inv_std[ch], gamma[ch]);
            for j in ch * plane..(ch + 1) * plane {
                out[j] = if batch_stats {
                    let xhat = (xi[j] - m) * is;
                    g * is * (gi[j] - sum_g[ch] / count - xhat * sum_gx[ch] / count)
                } else {
                    g * is * gi[j]
                };
            }
        }
    }
    gx
}
