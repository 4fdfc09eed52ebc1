//! Shared convolutional encoder: a double 3x3 conv block per stage, with 2x2
//! max pooling between stages. Stage `i` has `width * 2^i` channels.

use slidens_tensor::{Graph, Scalar, Var};

use super::layers::{Builder, DoubleConv};

pub(crate) fn stage_channels(width: usize, i: usize) -> usize {
    width << i
}

pub(crate) struct Encoder {
    stages: Vec<DoubleConv>,
    /// Stages past this index keep their resolution and dilate instead.
    pooled_stages: usize,
}

impl Encoder {
    /// `depth` pooling stages, so `depth + 1` feature maps. With
    /// `output_stride = Some(os)`, stages deeper than `log2(os)` replace
    /// pooling with dilation, as in atrous backbones.
    pub fn new<T: Scalar>(
        b: &mut Builder<'_, T>,
        in_channels: usize,
        width: usize,
        depth: usize,
        output_stride: Option<usize>,
    ) -> Self {
        let pooled_stages = output_stride.map_or(depth, |os| os.trailing_zeros() as usize).min(depth);
        let stages = b.scoped("encoder", |b| {
            (0..=depth)
                .map(|i| {
                    let cin = if i == 0 { in_channels } else { stage_channels(width, i - 1) };
                    let dilation = if i > pooled_stages { 1 << (i - pooled_stages) } else { 1 };
                    b.double(&format!("stage{i}"), cin, stage_channels(width, i), dilation)
                })
                .collect()
        });
        Self { stages, pooled_stages }
    }

    /// Feature maps of every stage, shallowest first.
    pub fn fwd<T: Scalar>(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Vec<Var> {
        let mut feats = Vec::with_capacity(self.stages.len());
        let mut h = x;
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 && i <= self.pooled_stages {
                h = g.max_pool2(h);
            }
            h = stage.fwd(g, p, h);
            feats.push(h);
        }
        feats
    }
}
