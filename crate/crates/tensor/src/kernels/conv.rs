//! 2-D convolution through im2col + gemm. Out-of-range taps read the
//! nearest edge pixel (replicate padding), so a spatially constant input
//! produces a spatially constant output.

use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dCfg {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv2dCfg {
    /// Stride 1, "same" padding for an odd kernel.
    pub fn same(kernel: usize) -> Self {
        Self::dilated(kernel, 1)
    }

    /// Stride 1, "same" padding for an odd kernel at the given dilation.
    pub fn dilated(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
        }
    }

    pub fn out_len(&self, len: usize, kernel: usize) -> usize {
        let span = self.dilation * (kernel - 1) + 1;
        assert!(
            len + 2 * self.padding >= span,
            "conv input of length {len} too small for kernel {kernel}"
        );
        (len + 2 * self.padding - span) / self.stride + 1
    }
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl Geometry {
    fn new(c: usize, h: usize, w: usize, kh: usize, kw: usize, cfg: Conv2dCfg) -> Self {
        let ho = cfg.out_len(h, kh);
        let wo = cfg.out_len(w, kw);
        let table = |k: usize, out: usize, len: usize| -> Vec<usize> {
            (0..out)
                .map(|o| {
                    let i = (o * cfg.stride + k * cfg.dilation) as isize - cfg.padding as isize;
                    i.clamp(0, len as isize - 1) as usize
                })
                .collect()
        };
        Self {
            c,
            h,
            w,
            kh,
            kw,
            ho,
            wo,
            rows: (0..kh).map(|k| table(k, ho, h)).collect(),
            cols: (0..kw).map(|k| table(k, wo, w)).collect(),
        }
    }

    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self, cfg: Conv2dCfg) -> bool {
        self.kh == 1 && self.kw == 1 && cfg.stride == 1 && cfg.padding == 0
    }

    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let plane = self.h * self.w;
        let hw = self.out_len();
        let mut r = 0;
        for c in 0..self.c {
            let xc = &x[c * plane..(c + 1) * plane];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let dst = &mut col[r * hw..(r + 1) * hw];
                    let ctab = &self.cols[kj];
                    for (oy, &iy) in self.rows[ki].iter().enumerate() {
                        let src = &xc[iy * self.w..(iy + 1) * self.w];
                        let d = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        for (o, &ix) in d.iter_mut().zip(ctab) {
                            *o = src[ix];
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, col: &[T], dx: &mut [T]) {
        let plane = self.h * self.w;
        let hw = self.out_len();
        let mut r = 0;
        for c in 0..self.c {
            let dxc = &mut dx[c * plane..(c + 1) * plane];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let src = &col[r * hw..(r + 1) * hw];
                    let ctab = &self.cols[kj];
                    for (oy, &iy) in self.rows[ki].iter().enumerate() {
                        let s = &src[oy * self.wo..(oy + 1) * self.wo];
                        let drow = &mut dxc[iy * self.w..(iy + 1) * self.w];
                        for (&v, &ix) in s.iter().zip(ctab) {
                            drow[ix] += v;
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    cfg: Conv2dCfg,
) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (o, wc, kh, kw) = weight.dims4();
    assert_eq!(c, wc, "conv2d: input has {c} channels, weight expects {wc}");
    let g = Geometry::new(c, h, w, kh, kw, cfg);
    let (k, hw) = (g.patch_len(), g.out_len());
    let mut out = Tensor::zeros(&[n, o, g.ho, g.wo]);
    let pointwise = g.is_pointwise(cfg);
    let mut col = if pointwise { Vec::new() } else { vec![T::zero(); k * hw] };
    let xs = x.data();
    for b in 0..n {
        let xb = &xs[b * c * h * w..(b + 1) * c * h * w];
        let src: &[T] = if pointwise {
            xb
        } else {
            g.im2col(xb, &mut col);
            &col
        };
        let ob = &mut out.data_mut()[b * o * hw..(b + 1) * o * hw];
        if let Some(bias) = bias {
            for (oc, chunk) in ob.chunks_mut(hw).enumerate() {
                chunk.fill(bias.data()[oc]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(o, k, hw, weight.data(), k as isize, 1, src, hw as isize, 1, beta, ob, hw as isize, 1);
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

pub(crate) fn backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    cfg: Conv2dCfg,
    dy: &Tensor<T>,
    need: [bool; 3],
) -> ConvGrads<T> {
    let (n, c, h, w) = x.dims4();
    let (o, _, kh, kw) = weight.dims4();
    let g = Geometry::new(c, h, w, kh, kw, cfg);
    let (k, hw) = (g.patch_len(), g.out_len());
    let pointwise = g.is_pointwise(cfg);
    let mut dx = need[0].then(|| Tensor::zeros(x.shape()));
    let mut dw = need[1].then(|| Tensor::zeros(weight.shape()));
    let mut db = need[2].then(|| Tensor::zeros(&[o]));
    let mut col = vec![T::zero(); if pointwise { 0 } else { k * hw }];
    let mut dcol = vec![T::zero(); if dx.is_some() { k * hw } else { 0 }];
    let xs = x.data();
    for b in 0..n {
        let dyb = &dy.data()[b * o * hw..(b + 1) * o * hw];
        if let Some(db) = db.as_mut() {
            for (acc, chunk) in db.data_mut().iter_mut().zip(dyb.chunks(hw)) {
                *acc += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let xb = &xs[b * c * h * w..(b + 1) * c * h * w];
            let src: &[T] = if pointwise {
                xb
            } else {
                g.im2col(xb, &mut col);
                &col
            };
            // dw (o x k) += dy (o x hw) * src^T (hw x k)
            T::gemm(o, hw, k, dyb, hw as isize, 1, src, 1, hw as isize, T::one(), dw.data_mut(), k as isize, 1);
        }
        if let Some(dx) = dx.as_mut() {
            // dcol (k x hw) = w^T (k x o) * dy (o x hw)
            T::gemm(k, o, hw, weight.data(), 1, k as isize, dyb, hw as isize, 1, T::zero(), &mut dcol, hw as isize, 1);
            let dxb = &mut dx.data_mut()[b * c * h * w..(b + 1) * c * h * w];
            if pointwise {
                for (d, &v) in dxb.iter_mut().zip(&dcol) {
                    *d += v;
                }
            } else {
                g.col2im(&dcol, dxb);
            }
        }
    }
    ConvGrads { dx, dw, db }
}
