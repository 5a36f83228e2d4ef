//! Element-level kernels. Shapes are validated by the caller.

use super::KernelCtx;
use crate::tensor::{Tensor, TensorType};

pub(super) fn sum_values(values: impl DoubleEndedIterator<Item = f64>, ctx: KernelCtx) -> f64 {
    if ctx.reverse_reduce {
        values.rev().fold(0.0, |a, b| a + b)
    } else {
        values.fold(0.0, |a, b| a + b)
    }
}

pub(super) fn map1(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(x.ty.clone(), x.data.iter().map(|&v| f(v)).collect())
}

pub(super) fn zip2(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(a.ty.clone(), a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
}

/// Splits a shape around `dim` into (outer, extent, inner) element counts.
pub(super) fn around(shape: &[i64], dim: usize) -> (usize, usize, usize) {
    let outer: i64 = shape[..dim].iter().product();
    let inner: i64 = shape[dim + 1..].iter().product();
    (outer as usize, shape[dim] as usize, inner as usize)
}

pub(super) fn transpose2d(x: &Tensor, out: TensorType) -> Tensor {
    let (r, c) = (x.ty.shape[0] as usize, x.ty.shape[1] as usize);
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            data[j * r + i] = x.data[i * c + j];
        }
    }
    Tensor::new(out, data)
}

pub(super) fn pad_last(x: &Tensor, left: usize, right: usize, out: TensorType) -> Tensor {
    let n = *x.ty.shape.last().unwrap() as usize;
    let rows = x.ty.shape[..x.ty.rank() - 1].iter().product::<i64>() as usize;
    let mut data = Vec::with_capacity(rows * (n + left + right));
    for r in 0..rows {
        data.extend(std::iter::repeat_n(0.0, left));
        data.extend_from_slice(&x.data[r * n..(r + 1) * n]);
        data.extend(std::iter::repeat_n(0.0, right));
    }
    Tensor::new(out, data)
}

pub(super) fn slice_last(x: &Tensor, start: usize, end: usize, out: TensorType) -> Tensor {
    let n = *x.ty.shape.last().unwrap() as usize;
    let rows: i64 = x.ty.shape[..x.ty.rank() - 1].iter().product();
    let mut data = Vec::with_capacity(rows as usize * (end - start));
    for r in 0..rows as usize {
        data.extend_from_slice(&x.data[r * n + start..r * n + end]);
    }
    Tensor::new(out, data)
}

pub(super) fn unfold(x: &Tensor, dim: usize, size: usize, step: usize, out: TensorType) -> Tensor {
    let (outer, n, inner) = around(&x.ty.shape, dim);
    let windows = (n - size) / step + 1;
    let mut data = Vec::with_capacity(outer * windows * inner * size);
    for o in 0..outer {
        for w in 0..windows {
            for i in 0..inner {
                for k in 0..size {
                    data.push(x.data[(o * n + w * step + k) * inner + i]);
                }
            }
        }
    }
    Tensor::new(out, data)
}

pub(super) fn concat(a: &Tensor, b: &Tensor, dim: usize, out: TensorType) -> Tensor {
    let (outer, na, inner) = around(&a.ty.shape, dim);
    let nb = b.ty.shape[dim] as usize;
    let mut data = Vec::with_capacity(outer * (na + nb) * inner);
    for o in 0..outer {
        data.extend_from_slice(&a.data[o * na * inner..(o + 1) * na * inner]);
        data.extend_from_slice(&b.data[o * nb * inner..(o + 1) * nb * inner]);
    }
    Tensor::new(out, data)
}

pub(super) fn split(x: &Tensor, dim: usize, at: usize, outs: (TensorType, TensorType)) -> Vec<Tensor> {
    let (outer, n, inner) = around(&x.ty.shape, dim);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for o in 0..outer {
        let base = o * n * inner;
        first.extend_from_slice(&x.data[base..base + at * inner]);
        second.extend_from_slice(&x.data[base + at * inner..base + n * inner]);
    }
    vec![Tensor::new(outs.0, first), Tensor::new(outs.1, second)]
}

pub(super) fn softmax(x: &Tensor, dim: usize, ctx: KernelCtx) -> Tensor {
    let (outer, n, inner) = around(&x.ty.shape, dim);
    let mut data = x.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let m = (0..n).map(|k| x.data[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = (0..n).map(|k| (x.data[idx(k)] - m).exp()).collect();
            let total = sum_values(exps.iter().copied(), ctx);
            for k in 0..n {
                data[idx(k)] = exps[k] / total;
            }
        }
    }
    Tensor::new(x.ty.clone(), data)
}

pub(super) fn mean_dim(x: &Tensor, dim: usize, out: TensorType, ctx: KernelCtx) -> Tensor {
    let (outer, n, inner) = around(&x.ty.shape, dim);
    let mut data = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let s = sum_values((0..n).map(|k| x.data[(o * n + k) * inner + i]), ctx);
            data.push(if n == 0 { f64::NAN } else { s / n as f64 });
        }
    }
    Tensor::new(out, data)
}

pub(super) fn repeat_last(x: &Tensor, times: usize, out: TensorType) -> Tensor {
    let n = *x.ty.shape.last().unwrap() as usize;
    let rows: i64 = x.ty.shape[..x.ty.rank() - 1].iter().product();
    let mut data = Vec::with_capacity(rows as usize * n * times);
    for r in 0..rows as usize {
        for _ in 0..times {
            data.extend_from_slice(&x.data[r * n..(r + 1) * n]);
        }
    }
    Tensor::new(out, data)
}

pub(super) struct Pool {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Average pooling over the last two dims with zero padding counted in the
/// divisor; windows running past the padded border divide by the clipped size.
pub(super) fn avg_pool2d(x: &Tensor, p: &Pool, out: TensorType, ctx: KernelCtx) -> Tensor {
    let r = x.ty.rank();
    let (h, w) = (x.ty.shape[r - 2], x.ty.shape[r - 1]);
    let (oh, ow) = (out.shape[r - 2] as usize, out.shape[r - 1] as usize);
    let planes = x.ty.shape[..r - 2].iter().product::<i64>() as usize;
    let pad = p.pad as i64;
    let mut data = Vec::with_capacity(planes * oh * ow);
    for pl in 0..planes {
        let base = pl * (h * w) as usize;
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * p.stride) as i64 - pad;
                let x0 = (ox * p.stride) as i64 - pad;
                let y1 = (y0 + p.kh as i64).min(h + pad);
                let x1 = (x0 + p.kw as i64).min(w + pad);
                let count = ((y1 - y0) * (x1 - x0)).max(1) as f64;
                let mut vals = Vec::with_capacity(p.kh * p.kw);
                for y in y0..y1 {
                    for xx in x0..x1 {
                        if y >= 0 && y < h && xx >= 0 && xx < w {
                            vals.push(x.data[base + (y * w + xx) as usize]);
                        }
                    }
                }
                data.push(sum_values(vals.into_iter(), ctx) / count);
            }
        }
    }
    Tensor::new(out, data)
}

pub(super) fn max_pool2d(x: &Tensor, k: usize, out: TensorType) -> Tensor {
    let r = x.ty.rank();
    let (h, w) = (x.ty.shape[r - 2] as usize, x.ty.shape[r - 1] as usize);
    let (oh, ow) = (out.shape[r - 2] as usize, out.shape[r - 1] as usize);
    let planes = x.data.len() / (h * w).max(1);
    let mut data = Vec::with_capacity(planes * oh * ow);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for y in oy * k..oy * k + k {
                    for xx in ox * k..ox * k + k {
                        m = m.max(x.data[base + y * w + xx]);
                    }
                }
                data.push(m);
            }
        }
    }
    Tensor::new(out, data)
}

/// Batched matrix product over the last two dims.
pub(super) fn matmul(a: &Tensor, b: &Tensor, out: TensorType, ctx: KernelCtx) -> Tensor {
    let r = a.ty.rank();
    let (m, k) = (a.ty.shape[r - 2] as usize, a.ty.shape[r - 1] as usize);
    let n = b.ty.shape[r - 1] as usize;
    let batch = out.numel().unwrap() as usize / (m * n).max(1);
    let mut data = Vec::with_capacity(batch * m * n);
    for bt in 0..batch {
        let (ab, bb) = (bt * m * k, bt * k * n);
        for i in 0..m {
            for j in 0..n {
                data.push(sum_values((0..k).map(|t| a.data[ab + i * k + t] * b.data[bb + t * n + j]), ctx));
            }
        }
    }
    Tensor::new(out, data)
}

/// Direct convolution of `[c, h, w]` by `[o, c, kh, kw]`, no padding.
pub(super) fn conv2d(x: &Tensor, wt: &Tensor, stride: usize, out: TensorType, ctx: KernelCtx) -> Tensor {
    let (c, h, w) = (x.ty.shape[0] as usize, x.ty.shape[1] as usize, x.ty.shape[2] as usize);
    let (o, kh, kw) = (wt.ty.shape[0] as usize, wt.ty.shape[2] as usize, wt.ty.shape[3] as usize);
    let (oh, ow) = (out.shape[1] as usize, out.shape[2] as usize);
    let mut data = Vec::with_capacity(o * oh * ow);
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut terms = Vec::with_capacity(c * kh * kw);
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let xv = x.data[(ic * h + oy * stride + ky) * w + ox * stride + kx];
                            let wv = wt.data[((oc * c + ic) * kh + ky) * kw + kx];
                            terms.push(xv * wv);
                        }
                    }
                }
                data.push(sum_values(terms.into_iter(), ctx));
            }
        }
    }
    Tensor::new(out, data)
}

/// Nearest-neighbour upsampling by an integer factor over two spatial dims.
pub(super) fn upsample(x: &Tensor, dims: (usize, usize), scale: usize, out: TensorType) -> Tensor {
    let in_strides = crate::tensor::strides(&x.ty.shape);
    let out_shape = out.shape.clone();
    let n = out.numel().unwrap() as usize;
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        let mut src = 0;
        for (d, &i) in idx.iter().enumerate() {
            let si = if d == dims.0 || d == dims.1 { i / scale } else { i };
            src += si * in_strides[d];
        }
        data.push(x.data[src]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if (idx[d] as i64) < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(out, data)
}
