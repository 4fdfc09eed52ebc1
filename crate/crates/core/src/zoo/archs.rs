//! The nine decoder families. Each network maps `(N, C, H, W)` to one logit
//! channel at the input resolution.

use slidens_tensor::{Conv2dCfg, Graph, Scalar, Var};

use super::encoder::{stage_channels as ch, Encoder};
use super::layers::{spatial, sum_all, Builder, ChannelGate, Conv, ConvNormRelu, DoubleConv, PoolBranch};
use super::ArchName;

/// Atrous rates of the spatial pyramid pooling module.
pub const ASPP_RATES: [usize; 3] = [6, 12, 18];
/// Pooling grid sizes of the pyramid pooling module.
pub const PPM_BINS: [usize; 4] = [1, 2, 3, 6];
/// Output stride of the dilated encoder used by the DeepLab variants.
pub const DEEPLAB_OUTPUT_STRIDE: usize = 8;
/// Deepest encoder stage used by PSPNet.
pub const PSP_DEPTH: usize = 3;

fn head<T: Scalar>(b: &mut Builder<'_, T>, cin: usize) -> Conv {
    b.conv("head", cin, 1, 1, Conv2dCfg::same(1), true)
}

pub(crate) enum Net {
    Unet(Unet),
    UnetPlusPlus(UnetPlusPlus),
    MaNet(MaNet),
    Linknet(Linknet),
    Fpn(Fpn),
    PspNet(PspNet),
    Pan(Pan),
    DeepLabV3(DeepLabV3),
    DeepLabV3Plus(DeepLabV3Plus),
}

impl Net {
    pub fn build<T: Scalar>(arch: ArchName, b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        match arch {
            ArchName::Unet => Self::Unet(Unet::new(b, cin, width, depth)),
            ArchName::UnetPlusPlus => Self::UnetPlusPlus(UnetPlusPlus::new(b, cin, width, depth)),
            ArchName::MaNet => Self::MaNet(MaNet::new(b, cin, width, depth)),
            ArchName::Linknet => Self::Linknet(Linknet::new(b, cin, width, depth)),
            ArchName::Fpn => Self::Fpn(Fpn::new(b, cin, width, depth)),
            ArchName::PspNet => Self::PspNet(PspNet::new(b, cin, width, depth)),
            ArchName::Pan => Self::Pan(Pan::new(b, cin, width, depth)),
            ArchName::DeepLabV3 => Self::DeepLabV3(DeepLabV3::new(b, cin, width, depth)),
            ArchName::DeepLabV3Plus => Self::DeepLabV3Plus(DeepLabV3Plus::new(b, cin, width, depth)),
        }
    }

    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let (h, w) = spatial(g, x);
        let y = match self {
            Self::Unet(n) => n.fwd(g, p, x),
            Self::UnetPlusPlus(n) => n.fwd(g, p, x),
            Self::MaNet(n) => n.fwd(g, p, x),
            Self::Linknet(n) => n.fwd(g, p, x),
            Self::Fpn(n) => n.fwd(g, p, x),
            Self::PspNet(n) => n.fwd(g, p, x),
            Self::Pan(n) => n.fwd(g, p, x),
            Self::DeepLabV3(n) => n.fwd(g, p, x),
            Self::DeepLabV3Plus(n) => n.fwd(g, p, x),
        };
        g.resize_nearest(y, h, w)
    }
}

/// Symmetric encoder-decoder with concatenated skip connections.
pub(crate) struct Unet {
    enc: Encoder,
    blocks: Vec<DoubleConv>,
    head: Conv,
}

impl Unet {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, None);
        let blocks = b.scoped("decoder", |b| {
            (0..depth)
                .map(|i| b.double(&format!("up{i}"), ch(width, i + 1) + ch(width, i), ch(width, i), 1))
                .collect()
        });
        Self { enc, blocks, head: head(b, width) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let mut d = *f.last().unwrap();
        for i in (0..self.blocks.len()).rev() {
            let u = g.upsample(d, 2);
            let c = g.concat(&[u, f[i]]);
            d = self.blocks[i].fwd(g, p, c);
        }
        self.head.fwd(g, p, d)
    }
}

/// Nested, densely connected skip pathways: node `X[i][j]` sees every
/// earlier node of row `i` and the upsampled `X[i+1][j-1]`.
pub(crate) struct UnetPlusPlus {
    enc: Encoder,
    /// `nodes[j - 1][i]` is `X[i][j]`.
    nodes: Vec<Vec<DoubleConv>>,
    head: Conv,
}

impl UnetPlusPlus {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, None);
        let nodes = b.scoped("decoder", |b| {
            (1..=depth)
                .map(|j| {
                    (0..=depth - j)
                        .map(|i| {
                            let cin = j * ch(width, i) + ch(width, i + 1);
                            b.double(&format!("x{i}_{j}"), cin, ch(width, i), 1)
                        })
                        .collect()
                })
                .collect()
        });
        Self { enc, nodes, head: head(b, width) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let mut grid: Vec<Vec<Var>> = f.iter().map(|&v| vec![v]).collect();
        for (j, row) in self.nodes.iter().enumerate().map(|(k, r)| (k + 1, r)) {
            for (i, node) in row.iter().enumerate() {
                let below = g.upsample(grid[i + 1][j - 1], 2);
                let mut ins = grid[i][..j].to_vec();
                ins.push(below);
                let c = g.concat(&ins);
                let y = node.fwd(g, p, c);
                grid[i].push(y);
            }
        }
        let top = *grid[0].last().unwrap();
        self.head.fwd(g, p, top)
    }
}

/// Position-wise self-attention over every bottleneck pixel, blended in
/// through a learnable gain that starts at zero.
struct PositionAttention {
    query: Conv,
    key: Conv,
    value: Conv,
    gain: usize,
}

impl PositionAttention {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, c: usize) -> Self {
        let ck = (c / 8).max(2);
        b.scoped("attention", |b| Self {
            query: b.conv("query", c, ck, 1, Conv2dCfg::same(1), true),
            key: b.conv("key", c, ck, 1, Conv2dCfg::same(1), true),
            value: b.conv("value", c, c, 1, Conv2dCfg::same(1), true),
            gain: b.scalar("gain", 0.0),
        })
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let (n, c, h, w) = g.value(x).dims4();
        let q = self.query.fwd(g, p, x);
        let ck = g.shape(q)[1];
        let q = g.reshape(q, &[n, ck, h * w]);
        let k = self.key.fwd(g, p, x);
        let k = g.reshape(k, &[n, ck, h * w]);
        let v = self.value.fwd(g, p, x);
        let v = g.reshape(v, &[n, c, h * w]);
        let energy = g.matmul(q, k, true, false);
        let attn = g.softmax(energy);
        let out = g.matmul(v, attn, false, true);
        let out = g.reshape(out, &[n, c, h, w]);
        let out = g.mul(out, p[self.gain]);
        g.add(out, x)
    }
}

/// Decoder stage fusing upsampled features and the skip, each reweighted by
/// a shared channel-attention gate.
struct FusionBlock {
    reduce: ConvNormRelu,
    gate_up: ChannelGate,
    gate_skip: ChannelGate,
    fuse: DoubleConv,
}

impl FusionBlock {
    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], d: Var, skip: Var) -> Var {
        let h = self.reduce.fwd(g, p, d);
        let h = g.upsample(h, 2);
        let a = self.gate_up.logits(g, p, h);
        let s = self.gate_skip.logits(g, p, skip);
        let a = g.add(a, s);
        let a = g.sigmoid(a);
        let h = g.mul(h, a);
        let c = g.concat(&[h, skip]);
        self.fuse.fwd(g, p, c)
    }
}

/// Multi-scale attention network.
pub(crate) struct MaNet {
    enc: Encoder,
    attention: PositionAttention,
    blocks: Vec<FusionBlock>,
    head: Conv,
}

impl MaNet {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, None);
        let (attention, blocks) = b.scoped("decoder", |b| {
            let attention = PositionAttention::new(b, ch(width, depth));
            let blocks = (0..depth)
                .map(|i| {
                    let c = ch(width, i);
                    b.scoped(format!("up{i}"), |b| FusionBlock {
                        reduce: b.cnr("reduce", ch(width, i + 1), c, 3, 1),
                        gate_up: ChannelGate::new(b, "gate_up", c),
                        gate_skip: ChannelGate::new(b, "gate_skip", c),
                        fuse: b.double("fuse", 2 * c, c, 1),
                    })
                })
                .collect();
            (attention, blocks)
        });
        Self { enc, attention, blocks, head: head(b, width) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let mut d = self.attention.fwd(g, p, *f.last().unwrap());
        for i in (0..self.blocks.len()).rev() {
            d = self.blocks[i].fwd(g, p, d, f[i]);
        }
        self.head.fwd(g, p, d)
    }
}

struct LinkBlock {
    reduce: ConvNormRelu,
    conv: ConvNormRelu,
    expand: ConvNormRelu,
}

/// Lightweight decoder whose stages are added to (not concatenated with)
/// the encoder features.
pub(crate) struct Linknet {
    enc: Encoder,
    blocks: Vec<LinkBlock>,
    refine: ConvNormRelu,
    head: Conv,
}

impl Linknet {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, None);
        let blocks = b.scoped("decoder", |b| {
            (0..depth)
                .map(|i| {
                    let c_in = ch(width, i + 1);
                    let mid = (c_in / 4).max(2);
                    b.scoped(format!("up{i}"), |b| LinkBlock {
                        reduce: b.cnr("reduce", c_in, mid, 1, 1),
                        conv: b.cnr("conv", mid, mid, 3, 1),
                        expand: b.cnr("expand", mid, ch(width, i), 1, 1),
                    })
                })
                .collect()
        });
        let refine = b.cnr("refine", width, width, 3, 1);
        Self { enc, blocks, refine, head: head(b, width) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let mut d = *f.last().unwrap();
        for i in (0..self.blocks.len()).rev() {
            let blk = &self.blocks[i];
            let r = blk.reduce.fwd(g, p, d);
            let r = g.upsample(r, 2);
            let r = blk.conv.fwd(g, p, r);
            let e = blk.expand.fwd(g, p, r);
            d = g.add(e, f[i]);
        }
        let d = self.refine.fwd(g, p, d);
        self.head.fwd(g, p, d)
    }
}

/// Feature pyramid: top-down pathway with lateral 1x1 connections; every
/// pyramid level is projected, brought to stride 2 and summed.
pub(crate) struct Fpn {
    enc: Encoder,
    /// Index `k` serves encoder level `k + 1`.
    lateral: Vec<Conv>,
    seg: Vec<ConvNormRelu>,
    head: Conv,
}

impl Fpn {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, None);
        let pyramid = 2 * width;
        let (lateral, seg) = b.scoped("decoder", |b| {
            let lateral = (1..=depth)
                .map(|i| b.conv(&format!("lateral{i}"), ch(width, i), pyramid, 1, Conv2dCfg::same(1), true))
                .collect();
            let seg = (1..=depth).map(|i| b.cnr(&format!("seg{i}"), pyramid, width, 3, 1)).collect();
            (lateral, seg)
        });
        Self { enc, lateral, seg, head: head(b, width) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let depth = self.lateral.len();
        let mut level = self.lateral[depth - 1].fwd(g, p, f[depth]);
        let mut outs = Vec::with_capacity(depth);
        for i in (1..=depth).rev() {
            if i < depth {
                let lat = self.lateral[i - 1].fwd(g, p, f[i]);
                let up = g.upsample(level, 2);
                level = g.add(lat, up);
            }
            let s = self.seg[i - 1].fwd(g, p, level);
            outs.push(g.upsample(s, 1 << (i - 1)));
        }
        let merged = sum_all(g, &outs);
        self.head.fwd(g, p, merged)
    }
}

/// Pyramid scene parsing: context pooled at several grid sizes on a
/// shallow encoder, concatenated with the features it came from.
pub(crate) struct PspNet {
    enc: Encoder,
    branches: Vec<PoolBranch>,
    fuse: ConvNormRelu,
    head: Conv,
}

impl PspNet {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let depth = depth.min(PSP_DEPTH);
        let enc = Encoder::new(b, cin, width, depth, None);
        let c = ch(width, depth);
        let (branches, fuse) = b.scoped("decoder", |b| {
            let branches: Vec<_> = PPM_BINS
                .iter()
                .map(|&bins| PoolBranch::new(b, &format!("pool{bins}"), c, c / 4, bins))
                .collect();
            let fuse = b.cnr("fuse", c + PPM_BINS.len() * (c / 4), width * 2, 3, 1);
            (branches, fuse)
        });
        Self { enc, branches, fuse, head: head(b, width * 2) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let top = *f.last().unwrap();
        let mut ins = vec![top];
        for br in &self.branches {
            ins.push(br.fwd(g, p, top));
        }
        let c = g.concat(&ins);
        let y = self.fuse.fwd(g, p, c);
        self.head.fwd(g, p, y)
    }
}

/// Feature pyramid attention on the bottleneck: a two-level downsampling
/// pyramid gates a 1x1 projection, plus a global context term.
struct PyramidAttention {
    global: PoolBranch,
    mid: ConvNormRelu,
    down1: ConvNormRelu,
    down2: ConvNormRelu,
}

impl PyramidAttention {
    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let (h, w) = spatial(g, x);
        let (h1, w1) = (h.div_ceil(2), w.div_ceil(2));
        let (h2, w2) = (h1.div_ceil(2), w1.div_ceil(2));
        let glob = self.global.fwd(g, p, x);
        let mid = self.mid.fwd(g, p, x);
        let d1 = g.adaptive_avg_pool(x, h1, w1);
        let d1 = self.down1.fwd(g, p, d1);
        let d2 = g.adaptive_avg_pool(d1, h2, w2);
        let d2 = self.down2.fwd(g, p, d2);
        let u = g.resize_nearest(d2, h1, w1);
        let u = g.add(u, d1);
        let u = g.resize_nearest(u, h, w);
        let y = g.mul(mid, u);
        g.add(y, glob)
    }
}

/// Global attention upsample: high-level context gates the projected skip.
struct AttentionUpsample {
    low: ConvNormRelu,
    gate: Conv,
}

impl AttentionUpsample {
    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], high: Var, skip: Var) -> Var {
        let l = self.low.fwd(g, p, skip);
        let s = g.global_avg_pool(high);
        let s = self.gate.fwd(g, p, s);
        let s = g.sigmoid(s);
        let l = g.mul(l, s);
        let up = g.upsample(high, 2);
        g.add(up, l)
    }
}

/// Pyramid attention network.
pub(crate) struct Pan {
    enc: Encoder,
    fpa: PyramidAttention,
    gaus: Vec<AttentionUpsample>,
    head: Conv,
}

impl Pan {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, None);
        let d = 2 * width;
        let c = ch(width, depth);
        let (fpa, gaus) = b.scoped("decoder", |b| {
            let fpa = b.scoped("fpa", |b| PyramidAttention {
                global: PoolBranch::new(b, "global", c, d, 1),
                mid: b.cnr("mid", c, d, 1, 1),
                down1: b.cnr("down1", c, d, 3, 1),
                down2: b.cnr("down2", d, d, 3, 1),
            });
            let gaus = (1..depth)
                .map(|i| {
                    b.scoped(format!("gau{i}"), |b| AttentionUpsample {
                        low: b.cnr("low", ch(width, i), d, 3, 1),
                        gate: b.conv("gate", d, d, 1, Conv2dCfg::same(1), true),
                    })
                })
                .collect();
            (fpa, gaus)
        });
        Self { enc, fpa, gaus, head: head(b, d) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let mut h = self.fpa.fwd(g, p, *f.last().unwrap());
        for (k, gau) in self.gaus.iter().enumerate().rev() {
            h = gau.fwd(g, p, h, f[k + 1]);
        }
        self.head.fwd(g, p, h)
    }
}

/// Atrous spatial pyramid pooling: parallel 1x1, dilated 3x3 and image
/// pooling branches, concatenated and projected.
struct Aspp {
    point: ConvNormRelu,
    atrous: Vec<ConvNormRelu>,
    pool: PoolBranch,
    project: ConvNormRelu,
}

impl Aspp {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, cout: usize) -> Self {
        b.scoped("aspp", |b| Self {
            point: b.cnr("point", cin, cout, 1, 1),
            atrous: ASPP_RATES.iter().map(|&r| b.cnr(&format!("rate{r}"), cin, cout, 3, r)).collect(),
            pool: PoolBranch::new(b, "pool", cin, cout, 1),
            project: b.cnr("project", cout * (ASPP_RATES.len() + 2), cout, 1, 1),
        })
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let mut ins = vec![self.point.fwd(g, p, x)];
        for a in &self.atrous {
            ins.push(a.fwd(g, p, x));
        }
        ins.push(self.pool.fwd(g, p, x));
        let c = g.concat(&ins);
        self.project.fwd(g, p, c)
    }
}

fn deeplab_stride(depth: usize) -> usize {
    DEEPLAB_OUTPUT_STRIDE.min(1 << depth)
}

/// Dilated encoder at output stride 8 followed by ASPP.
pub(crate) struct DeepLabV3 {
    enc: Encoder,
    aspp: Aspp,
    refine: ConvNormRelu,
    head: Conv,
}

impl DeepLabV3 {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, Some(deeplab_stride(depth)));
        let a = 4 * width;
        let (aspp, refine) = b.scoped("decoder", |b| (Aspp::new(b, ch(width, depth), a), b.cnr("refine", a, a, 3, 1)));
        Self { enc, aspp, refine, head: head(b, a) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let y = self.aspp.fwd(g, p, *f.last().unwrap());
        let y = self.refine.fwd(g, p, y);
        self.head.fwd(g, p, y)
    }
}

/// DeepLabV3 plus a decoder that merges stride-4 encoder features.
pub(crate) struct DeepLabV3Plus {
    enc: Encoder,
    aspp: Aspp,
    low: ConvNormRelu,
    refine: ConvNormRelu,
    head: Conv,
}

impl DeepLabV3Plus {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cin: usize, width: usize, depth: usize) -> Self {
        let enc = Encoder::new(b, cin, width, depth, Some(deeplab_stride(depth)));
        let a = 4 * width;
        let (aspp, low, refine) = b.scoped("decoder", |b| {
            (
                Aspp::new(b, ch(width, depth), a),
                b.cnr("low", ch(width, 2), width, 1, 1),
                b.cnr("refine", a + width, a, 3, 1),
            )
        });
        Self { enc, aspp, low, refine, head: head(b, a) }
    }

    fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        let f = self.enc.fwd(g, p, x);
        let y = self.aspp.fwd(g, p, *f.last().unwrap());
        let (h, w) = spatial(g, f[2]);
        let y = g.resize_nearest(y, h, w);
        let l = self.low.fwd(g, p, f[2]);
        let c = g.concat(&[y, l]);
        let y = self.refine.fwd(g, p, c);
        self.head.fwd(g, p, y)
    }
}
