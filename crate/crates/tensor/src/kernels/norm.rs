//! Group normalization with per-channel affine parameters.

use crate::{Scalar, Tensor};

pub(crate) const EPS: f64 = 1e-5;

pub(crate) struct Saved<T> {
    pub mean: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    groups: usize,
) -> (Tensor<T>, Saved<T>) {
    let (n, c, h, w) = x.dims4();
    assert!(groups > 0 && c % groups == 0, "group_norm: {c} channels not divisible into {groups} groups");
    assert_eq!(gamma.len(), c);
    assert_eq!(beta.len(), c);
    let cg = c / groups;
    let plane = h * w;
    let count = T::from_usize(cg * plane).unwrap();
    let eps = T::lit(EPS);
    let mut y = Tensor::zeros(x.shape());
    let mut mean = Vec::with_capacity(n * groups);
    let mut rstd = Vec::with_capacity(n * groups);
    for b in 0..n {
        for g in 0..groups {
            let start = (b * c + g * cg) * plane;
            let xs = &x.data()[start..start + cg * plane];
            let mu = xs.iter().copied().sum::<T>() / count;
            let var = xs.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / count;
            let r = T::one() / (var + eps).sqrt();
            mean.push(mu);
            rstd.push(r);
            let ys = &mut y.data_mut()[start..start + cg * plane];
            for ci in 0..cg {
                let ch = g * cg + ci;
                let (ga, be) = (gamma.data()[ch], beta.data()[ch]);
                let range = ci * plane..(ci + 1) * plane;
                for (o, &v) in ys[range.clone()].iter_mut().zip(&xs[range]) {
                    *o = (v - mu) * r * ga + be;
                }
            }
        }
    }
    (y, Saved { mean, rstd })
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    groups: usize,
    saved: &Saved<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c, h, w) = x.dims4();
    let cg = c / groups;
    let plane = h * w;
    let count = T::from_usize(cg * plane).unwrap();
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for b in 0..n {
        for g in 0..groups {
            let idx = b * groups + g;
            let (mu, r) = (saved.mean[idx], saved.rstd[idx]);
            let start = (b * c + g * cg) * plane;
            let xs = &x.data()[start..start + cg * plane];
            let dys = &dy.data()[start..start + cg * plane];
            // sums of dxhat and dxhat * xhat over the group
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for ci in 0..cg {
                let ch = g * cg + ci;
                let ga = gamma.data()[ch];
                let mut dg = T::zero();
                let mut dbe = T::zero();
                for p in ci * plane..(ci + 1) * plane {
                    let xhat = (xs[p] - mu) * r;
                    dg += dys[p] * xhat;
                    dbe += dys[p];
                    let dxhat = dys[p] * ga;
                    s1 += dxhat;
                    s2 += dxhat * xhat;
                }
                dgamma.data_mut()[ch] += dg;
                dbeta.data_mut()[ch] += dbe;
            }
            let m1 = s1 / count;
            let m2 = s2 / count;
            let dxs = &mut dx.data_mut()[start..start + cg * plane];
            for ci in 0..cg {
                let ga = gamma.data()[g * cg + ci];
                for p in ci * plane..(ci + 1) * plane {
                    let xhat = (xs[p] - mu) * r;
                    dxs[p] = r * (dys[p] * ga - m1 - xhat * m2);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}
