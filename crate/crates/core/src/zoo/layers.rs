//! Parameterised building blocks. Layers only hold indices into the
//! model's [`ParamStore`]; values live on the tape during a forward pass.

use rand_chacha::ChaCha8Rng;
use slidens_tensor::{Conv2dCfg, Graph, ParamStore, Scalar, Tensor, Var};

pub(crate) struct Builder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    scope: Vec<String>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        Self { store, rng, scope: Vec::new() }
    }

    fn name(&self, leaf: &str) -> String {
        let mut s = self.scope.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(leaf);
        s
    }

    /// Runs `f` with `name` pushed onto the parameter-name scope.
    pub fn scoped<R>(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Self) -> R) -> R {
        self.scope.push(name.into());
        let r = f(self);
        self.scope.pop();
        r
    }

    pub fn conv(&mut self, leaf: &str, cin: usize, cout: usize, k: usize, cfg: Conv2dCfg, bias: bool) -> Conv {
        let w = self.store.push_he(self.name(&format!("{leaf}.w")), &[cout, cin, k, k], cin * k * k, self.rng);
        let b = bias.then(|| self.store.push(self.name(&format!("{leaf}.b")), Tensor::zeros(&[cout])));
        Conv { w, b, cfg }
    }

    pub fn norm(&mut self, leaf: &str, c: usize) -> Norm {
        let gamma = self.store.push(self.name(&format!("{leaf}.gamma")), Tensor::full(&[c], T::one()));
        let beta = self.store.push(self.name(&format!("{leaf}.beta")), Tensor::zeros(&[c]));
        let groups = [4, 2, 1].into_iter().find(|g| c.is_multiple_of(*g)).unwrap();
        Norm { gamma, beta, groups }
    }

    /// Learnable scalar, initialised to `value`.
    pub fn scalar(&mut self, leaf: &str, value: f64) -> usize {
        self.store.push(self.name(leaf), Tensor::full(&[1, 1, 1, 1], T::lit(value)))
    }

    pub fn cnr(&mut self, leaf: &str, cin: usize, cout: usize, k: usize, dilation: usize) -> ConvNormRelu {
        self.scoped(leaf, |b| ConvNormRelu {
            conv: b.conv("conv", cin, cout, k, Conv2dCfg::dilated(k, dilation), false),
            norm: b.norm("norm", cout),
        })
    }

    pub fn double(&mut self, leaf: &str, cin: usize, cout: usize, dilation: usize) -> DoubleConv {
        self.scoped(leaf, |b| DoubleConv {
            first: b.cnr("a", cin, cout, 3, dilation),
            second: b.cnr("b", cout, cout, 3, dilation),
        })
    }
}

pub(crate) struct Conv {
    w: usize,
    b: Option<usize>,
    cfg: Conv2dCfg,
}

impl Conv {
    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        g.conv2d(x, p[self.w], self.b.map(|b| p[b]), self.cfg)
    }
}

pub(crate) struct Norm {
    gamma: usize,
    beta: usize,
    groups: usize,
}

impl Norm {
    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        g.group_norm(x, p[self.gamma], p[self.beta], self.groups)
    }
}

pub(crate) struct ConvNormRelu {
    conv: Conv,
    norm: Norm,
}

impl ConvNormRelu {
    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let y = self.conv.fwd(g, p, x);
        let y = self.norm.fwd(g, p, y);
        g.relu(y)
    }
}

pub(crate) struct DoubleConv {
    first: ConvNormRelu,
    second: ConvNormRelu,
}

impl DoubleConv {
    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let y = self.first.fwd(g, p, x);
        self.second.fwd(g, p, y)
    }
}

/// Squeeze-and-excitation style channel gate: `sigmoid(W2 relu(W1 gap(x)))`,
/// shaped `(N, C, 1, 1)`. Returns the pre-sigmoid logits so callers can sum
/// several gates before squashing.
pub(crate) struct ChannelGate {
    reduce: Conv,
    expand: Conv,
}

impl ChannelGate {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, leaf: &str, c: usize) -> Self {
        let mid = (c / 4).max(2);
        b.scoped(leaf, |b| Self {
            reduce: b.conv("reduce", c, mid, 1, Conv2dCfg::same(1), true),
            expand: b.conv("expand", mid, c, 1, Conv2dCfg::same(1), true),
        })
    }

    pub fn logits<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let s = g.global_avg_pool(x);
        let s = self.reduce.fwd(g, p, s);
        let s = g.relu(s);
        self.expand.fwd(g, p, s)
    }
}

/// Pooled context branch: global (or `bins`-sized) average pool, 1x1 conv,
/// ReLU, then nearest resize back to the input size. No normalisation, since
/// a 1x1 map has no spatial statistics.
pub(crate) struct PoolBranch {
    conv: Conv,
    bins: usize,
}

impl PoolBranch {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, leaf: &str, cin: usize, cout: usize, bins: usize) -> Self {
        Self { conv: b.conv(leaf, cin, cout, 1, Conv2dCfg::same(1), true), bins }
    }

    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let (_, _, h, w) = g.value(x).dims4();
        let s = g.adaptive_avg_pool(x, self.bins.min(h), self.bins.min(w));
        let s = self.conv.fwd(g, p, s);
        let s = g.relu(s);
        g.resize_nearest(s, h, w)
    }
}

pub(crate) fn spatial(g: &Graph<impl Scalar>, x: Var) -> (usize, usize) {
    let s = g.shape(x);
    (s[2], s[3])
}

/// Element-wise sum of several same-shaped nodes.
pub(crate) fn sum_all<T: Scalar>(g: &mut Graph<T>, xs: &[Var]) -> Var {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = g.add(acc, x);
    }
    acc
}
