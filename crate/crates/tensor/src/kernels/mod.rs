pub mod conv;
pub(crate) mod norm;
pub(crate) mod pool;

use crate::{Scalar, Tensor};

/// Output shape of a broadcasting binary op. Ranks must match and every
/// dimension pair must be equal or contain a 1.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    assert_eq!(a.len(), b.len(), "broadcast needs equal ranks: {a:?} vs {b:?}");
    assert!(a.len() <= 4, "broadcast supports rank <= 4");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            assert!(x == y || x == 1 || y == 1, "cannot broadcast {a:?} with {b:?}");
            x.max(y)
        })
        .collect()
}

fn pad4(shape: &[usize]) -> [usize; 4] {
    let mut s = [1; 4];
    s[4 - shape.len()..].copy_from_slice(shape);
    s
}

fn bstrides(shape: &[usize], out: &[usize]) -> [usize; 4] {
    let s = pad4(shape);
    let o = pad4(out);
    let mut st = [0; 4];
    let mut acc = 1;
    for d in (0..4).rev() {
        st[d] = if s[d] == 1 && o[d] != 1 { 0 } else { acc };
        acc *= s[d];
    }
    st
}

/// Visits every output element with the flat indices it reads from `a` and `b`.
fn for_each_broadcast(a: &[usize], b: &[usize], out: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let o = pad4(out);
    let sa = bstrides(a, out);
    let sb = bstrides(b, out);
    let mut k = 0;
    for i0 in 0..o[0] {
        for i1 in 0..o[1] {
            for i2 in 0..o[2] {
                let ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..o[3] {
                    f(k, ba + i3 * sa[3], bb + i3 * sb[3]);
                    k += 1;
                }
            }
        }
    }
}

pub(crate) fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        return Tensor::from_vec(a.shape(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape());
    let mut y = Tensor::zeros(&out);
    let (ad, bd) = (a.data(), b.data());
    let yd = y.data_mut();
    for_each_broadcast(a.shape(), b.shape(), &out, |k, i, j| yd[k] = ad[i] + bd[j]);
    y
}

pub(crate) fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        return Tensor::from_vec(a.shape(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape());
    let mut y = Tensor::zeros(&out);
    let (ad, bd) = (a.data(), b.data());
    let yd = y.data_mut();
    for_each_broadcast(a.shape(), b.shape(), &out, |k, i, j| yd[k] = ad[i] * bd[j]);
    y
}

/// Sums `dy` (shaped like the broadcast output) down to `shape`.
pub(crate) fn reduce_to<T: Scalar>(dy: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if dy.shape() == shape {
        return dy.clone();
    }
    let mut d = Tensor::zeros(shape);
    let dd = d.data_mut();
    let g = dy.data();
    for_each_broadcast(shape, shape, dy.shape(), |k, i, _| dd[i] += g[k]);
    d
}

/// Gradients of `a * b` w.r.t. each operand (only those requested).
pub(crate) fn mul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
    need: [bool; 2],
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    if a.shape() == b.shape() {
        let da = need[0].then(|| {
            let v = dy.data().iter().zip(b.data()).map(|(&g, &y)| g * y).collect();
            Tensor::from_vec(a.shape(), v)
        });
        let db = need[1].then(|| {
            let v = dy.data().iter().zip(a.data()).map(|(&g, &x)| g * x).collect();
            Tensor::from_vec(b.shape(), v)
        });
        return (da, db);
    }
    let mut da = need[0].then(|| Tensor::zeros(a.shape()));
    let mut db = need[1].then(|| Tensor::zeros(b.shape()));
    let (ad, bd, g) = (a.data(), b.data(), dy.data());
    for_each_broadcast(a.shape(), b.shape(), dy.shape(), |k, i, j| {
        if let Some(da) = da.as_mut() {
            da.data_mut()[i] += g[k] * bd[j];
        }
        if let Some(db) = db.as_mut() {
            db.data_mut()[j] += g[k] * ad[i];
        }
    });
    (da, db)
}

/// Row-major view `(rows, cols, row stride, col stride)` of one batch slice.
#[derive(Clone, Copy)]
pub(crate) struct MatView {
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl MatView {
    /// View of a stored `r x c` matrix, optionally transposed.
    pub fn of(r: usize, c: usize, transpose: bool) -> Self {
        if transpose {
            Self { rows: c, cols: r, rs: 1, cs: c as isize }
        } else {
            Self { rows: r, cols: c, rs: c as isize, cs: 1 }
        }
    }

    pub fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }
}

fn dims3(t: &Tensor<impl Scalar>) -> (usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 3, "batched matmul expects rank-3 operands, got {s:?}");
    (s[0], s[1], s[2])
}

/// Accumulating batched product `c[b] (+)= op_a(a[b]) * op_b(b[b])`.
pub(crate) fn bmm_into<T: Scalar>(
    batch: usize,
    a: &[T],
    va: MatView,
    b: &[T],
    vb: MatView,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(va.cols, vb.rows, "matmul inner dims differ");
    let (m, k, n) = (va.rows, va.cols, vb.cols);
    let beta = if accumulate { T::one() } else { T::zero() };
    for i in 0..batch {
        T::gemm(
            m,
            k,
            n,
            &a[i * m * k..(i + 1) * m * k],
            va.rs,
            va.cs,
            &b[i * k * n..(i + 1) * k * n],
            vb.rs,
            vb.cs,
            beta,
            &mut c[i * m * n..(i + 1) * m * n],
            n as isize,
            1,
        );
    }
}

pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Tensor<T> {
    let (ba, ra, ca) = dims3(a);
    let (bb, rb, cb) = dims3(b);
    assert_eq!(ba, bb, "matmul batch sizes differ");
    let va = MatView::of(ra, ca, ta);
    let vb = MatView::of(rb, cb, tb);
    let mut c = Tensor::zeros(&[ba, va.rows, vb.cols]);
    bmm_into(ba, a.data(), va, b.data(), vb, c.data_mut(), false);
    c
}

pub(crate) fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    ta: bool,
    tb: bool,
    dc: &Tensor<T>,
    need: [bool; 2],
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let (batch, ra, ca) = dims3(a);
    let (_, rb, cb) = dims3(b);
    let va = MatView::of(ra, ca, ta);
    let vb = MatView::of(rb, cb, tb);
    let vc = MatView::of(va.rows, vb.cols, false);
    let da = need[0].then(|| {
        let mut da = Tensor::zeros(a.shape());
        if ta {
            // dA (stored k x m) = op_b(B) * dC^T
            bmm_into(batch, b.data(), vb, dc.data(), vc.t(), da.data_mut(), false);
        } else {
            bmm_into(batch, dc.data(), vc, b.data(), vb.t(), da.data_mut(), false);
        }
        da
    });
    let db = need[1].then(|| {
        let mut db = Tensor::zeros(b.shape());
        if tb {
            bmm_into(batch, dc.data(), vc.t(), a.data(), va, db.data_mut(), false);
        } else {
            bmm_into(batch, a.data(), va.t(), dc.data(), vc, db.data_mut(), false);
        }
        db
    });
    (da, db)
}

/// Softmax over the last dimension.
pub(crate) fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let last = *x.shape().last().expect("softmax on rank-0 tensor");
    let mut y = x.clone();
    for row in y.data_mut().chunks_mut(last) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    y
}

pub(crate) fn softmax_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let last = *y.shape().last().unwrap();
    let mut dx = Tensor::zeros(y.shape());
    for ((d, yr), gr) in dx
        .data_mut()
        .chunks_mut(last)
        .zip(y.data().chunks(last))
        .zip(dy.data().chunks(last))
    {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for ((o, &yv), &g) in d.iter_mut().zip(yr).zip(gr) {
            *o = yv * (g - dot);
        }
    }
    dx
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_channel_gate() {
        let a = Tensor::from_vec(&[1, 2, 1, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let g = Tensor::from_vec(&[1, 2, 1, 1], vec![10.0, 100.0]);
        assert_eq!(mul(&a, &g).data(), &[10.0, 20.0, 300.0, 400.0]);
        assert_eq!(add(&g, &a).data(), &[11.0, 12.0, 103.0, 104.0]);
        let r = reduce_to(&a, &[1, 2, 1, 1]);
        assert_eq!(r.data(), &[3.0, 7.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0f64, 2.0, 3.0, -1.0, 0.0, 1000.0]);
        let y = softmax(&x);
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
