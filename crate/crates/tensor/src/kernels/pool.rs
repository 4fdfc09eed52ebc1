//! Spatial resampling: max pooling, adaptive average pooling and
//! nearest-neighbour resizing.

use crate::{Scalar, Tensor};

/// 2x2 max pooling with stride 2. Returns the output and, per output
/// element, the flat input index it was taken from.
pub(crate) fn max_pool2<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let (n, c, h, w) = x.dims4();
    assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial size, got {h}x{w}");
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, c, ho, wo]);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    let xs = x.data();
    let ys = y.data_mut();
    let mut o = 0;
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if xs[i] > xs[best] {
                        best = i;
                    }
                }
                ys[o] = xs[best];
                arg.push(best as u32);
                o += 1;
            }
        }
    }
    (y, arg)
}

pub(crate) fn max_pool2_backward<T: Scalar>(shape: &[usize], arg: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(shape);
    let d = dx.data_mut();
    for (&i, &g) in arg.iter().zip(dy.data()) {
        d[i as usize] += g;
    }
    dx
}

fn bins(len: usize, out: usize) -> Vec<(usize, usize)> {
    (0..out)
        .map(|i| {
            let start = i * len / out;
            let end = ((i + 1) * len).div_ceil(out);
            (start, end.max(start + 1))
        })
        .collect()
}

pub(crate) fn adaptive_avg_pool<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (rb, cb) = (bins(h, oh), bins(w, ow));
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let xs = x.data();
    let ys = y.data_mut();
    for nc in 0..n * c {
        let plane = &xs[nc * h * w..(nc + 1) * h * w];
        for (i, &(r0, r1)) in rb.iter().enumerate() {
            for (j, &(c0, c1)) in cb.iter().enumerate() {
                let mut s = T::zero();
                for r in r0..r1 {
                    s += plane[r * w + c0..r * w + c1].iter().copied().sum::<T>();
                }
                ys[(nc * oh + i) * ow + j] = s / T::from_usize((r1 - r0) * (c1 - c0)).unwrap();
            }
        }
    }
    y
}

pub(crate) fn adaptive_avg_pool_backward<T: Scalar>(shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (_, _, oh, ow) = dy.dims4();
    let (rb, cb) = (bins(h, oh), bins(w, ow));
    let mut dx = Tensor::zeros(shape);
    let d = dx.data_mut();
    for nc in 0..n * c {
        for (i, &(r0, r1)) in rb.iter().enumerate() {
            for (j, &(c0, c1)) in cb.iter().enumerate() {
                let g = dy.data()[(nc * oh + i) * ow + j] / T::from_usize((r1 - r0) * (c1 - c0)).unwrap();
                for r in r0..r1 {
                    for v in &mut d[nc * h * w + r * w + c0..nc * h * w + r * w + c1] {
                        *v += g;
                    }
                }
            }
        }
    }
    dx
}

fn nearest_table(len: usize, out: usize) -> Vec<usize> {
    (0..out).map(|o| (o * len / out).min(len - 1)).collect()
}

pub(crate) fn resize_nearest<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (rt, ct) = (nearest_table(h, oh), nearest_table(w, ow));
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let xs = x.data();
    let ys = y.data_mut();
    for nc in 0..n * c {
        for (i, &r) in rt.iter().enumerate() {
            let src = &xs[nc * h * w + r * w..nc * h * w + (r + 1) * w];
            let dst = &mut ys[(nc * oh + i) * ow..(nc * oh + i + 1) * ow];
            for (o, &cidx) in dst.iter_mut().zip(&ct) {
                *o = src[cidx];
            }
        }
    }
    y
}

pub(crate) fn resize_nearest_backward<T: Scalar>(shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (_, _, oh, ow) = dy.dims4();
    let (rt, ct) = (nearest_table(h, oh), nearest_table(w, ow));
    let mut dx = Tensor::zeros(shape);
    let d = dx.data_mut();
    for nc in 0..n * c {
        for (i, &r) in rt.iter().enumerate() {
            let src = &dy.data()[(nc * oh + i) * ow..(nc * oh + i + 1) * ow];
            let dst = &mut d[nc * h * w + r * w..nc * h * w + (r + 1) * w];
            for (&g, &cidx) in src.iter().zip(&ct) {
                dst[cidx] += g;
            }
        }
    }
    dx
}
