//! im2col / col2im lowering shared by the convolution operators.
//!
//! Column matrices are laid out `[channels * k * k, out_h * out_w]`, row
//! index `(c * k + ky) * k + kx`, matching a weight tensor of shape
//! `[out_channels, channels, k, k]` flattened to `[out_channels, channels * k * k]`.

use crate::scalar::Scalar;

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_transpose_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if input == 0 || stride == 0 || output_padding >= stride {
        return None;
    }
    ((input - 1) * stride + kernel + output_padding).checked_sub(2 * padding)
}

/// Input row read by output row `o` at kernel offset `kk`, if inside the image.
fn source_index(o: usize, kk: usize, stride: usize, padding: usize, size: usize) -> Option<usize> {
    (o * stride + kk).checked_sub(padding).filter(|&i| i < size)
}

/// Output columns `lo..hi` whose input column `o * stride + kx - padding` lies in `0..w`.
fn valid_range(kx: usize, stride: usize, padding: usize, w: usize, out_w: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(kx).div_ceil(stride);
    let hi = if w + padding > kx {
        ((w + padding - kx - 1) / stride + 1).min(out_w)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Lowers `x: [channels, h, w]` into a column matrix for a `k x k` kernel.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Scalar>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let plane = out_h * out_w;
    let mut cols = vec![T::zero(); channels * k * k * plane];
    for c in 0..channels {
        let src = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_range(kx, stride, padding, w, out_w);
                for oy in 0..out_h {
                    let Some(iy) = source_index(oy, ky, stride, padding, h) else {
                        continue;
                    };
                    let src_row = &src[iy * w..(iy + 1) * w];
                    let dst_row = &mut dst[oy * out_w..(oy + 1) * out_w];
                    if stride == 1 {
                        let off = lo + kx - padding;
                        dst_row[lo..hi].copy_from_slice(&src_row[off..off + hi - lo]);
                    } else {
                        for ox in lo..hi {
                            dst_row[ox] = src_row[ox * stride + kx - padding];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into `[channels, h, w]`.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Scalar>(
    cols: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let plane = out_h * out_w;
    let mut x = vec![T::zero(); channels * h * w];
    for c in 0..channels {
        let dst = &mut x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_range(kx, stride, padding, w, out_w);
                for oy in 0..out_h {
                    let Some(iy) = source_index(oy, ky, stride, padding, h) else {
                        continue;
                    };
                    let dst_row = &mut dst[iy * w..(iy + 1) * w];
                    let src_row = &src[oy * out_w..(oy + 1) * out_w];
                    if stride == 1 {
                        let off = lo + kx - padding;
                        for (d, &v) in dst_row[off..off + hi - lo].iter_mut().zip(&src_row[lo..hi]) {
                            *d = *d + v;
                        }
                    } else {
                        for ox in lo..hi {
                            let ix = ox * stride + kx - padding;
                            dst_row[ix] = dst_row[ix] + src_row[ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Output channel count at or below which stride-1 convolutions skip the
/// column matrix; with so few outputs the lowering is memory bound.
pub(crate) const DIRECT_MAX_OUT: usize = 8;

/// Stride-1 convolution by shifted row updates. `weights: [out, channels, k, k]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_direct<T: Scalar>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    weights: &[T],
    out_channels: usize,
    k: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let plane = out_h * out_w;
    let mut out = vec![T::zero(); out_channels * plane];
    for c in 0..channels {
        let src = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let (lo, hi) = valid_range(kx, 1, padding, w, out_w);
                if lo >= hi {
                    continue;
                }
                let off = lo + kx - padding;
                for o in 0..out_channels {
                    let wv = weights[((o * channels + c) * k + ky) * k + kx];
                    let dst = &mut out[o * plane..(o + 1) * plane];
                    for oy in 0..out_h {
                        let Some(iy) = source_index(oy, ky, 1, padding, h) else {
                            continue;
                        };
                        let s = &src[iy * w + off..iy * w + off + hi - lo];
                        let d = &mut dst[oy * out_w + lo..oy * out_w + hi];
                        for (d, &s) in d.iter_mut().zip(s) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Weight gradient matching [`conv2d_direct`]: `[out, channels, k, k]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_direct_weight_grad<T: Scalar>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    grad_out: &[T],
    out_channels: usize,
    k: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let plane = out_h * out_w;
    let mut dw = vec![T::zero(); out_channels * channels * k * k];
    for o in 0..out_channels {
        let g = &grad_out[o * plane..(o + 1) * plane];
        for c in 0..channels {
            let src = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = valid_range(kx, 1, padding, w, out_w);
                    if lo >= hi {
                        continue;
                    }
                    let off = lo + kx - padding;
                    let mut acc = T::zero();
                    for oy in 0..out_h {
                        let Some(iy) = source_index(oy, ky, 1, padding, h) else {
                            continue;
                        };
                        acc = acc
                            + dot(
                                &g[oy * out_w + lo..oy * out_w + hi],
                                &src[iy * w + off..iy * w + off + hi - lo],
                            );
                    }
                    dw[((o * channels + c) * k + ky) * k + kx] = acc;
                }
            }
        }
    }
    dw
}

/// Dot product with eight independent partial sums so it vectorizes.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] = lanes[i] + x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    lanes.iter().fold(tail, |s, &v| s + v)
}
