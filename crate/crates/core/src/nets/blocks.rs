use super::{Bound, ParamId, ParamKind, ParamStore};
use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), ParamKind::ConvWeight, Tensor::zeros([cout, cin, k, k]));
        let bias = store.add(format!("{name}.bias"), ParamKind::ConvBias, Tensor::zeros([cout]));
        Self { weight, bias, stride, pad }
    }

    /// 3×3, stride 1, same padding.
    pub fn same3(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(store, name, cin, cout, 3, 1, 1)
    }

    pub fn pointwise(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(store, name, cin, cout, 1, 1, 0)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p[self.weight], Some(p[self.bias]), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl InstanceNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), ParamKind::NormGain, Tensor::ones([channels]));
        let bias = store.add(format!("{name}.bias"), ParamKind::NormBias, Tensor::zeros([channels]));
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.instance_norm(x, p[self.gain], p[self.bias])
    }
}

/// conv → instance norm → leaky ReLU(0.2)
#[derive(Clone, Debug)]
pub struct ConvNormAct {
    pub conv: Conv,
    pub norm: InstanceNorm,
}

impl ConvNormAct {
    pub fn new(store: &mut ParamStore, name: &str, conv: impl FnOnce(&mut ParamStore, &str) -> Conv, cout: usize) -> Self {
        let conv = conv(store, &format!("{name}.conv"));
        let norm = InstanceNorm::new(store, &format!("{name}.norm"), cout);
        Self { conv, norm }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, p, x)?;
        let y = self.norm.forward(g, p, y)?;
        Ok(g.leaky_relu(y, LEAKY_SLOPE))
    }
}

/// Two conv-norm-activation layers with an additive 1×1-conv skip from the
/// block input. Preserves spatial size.
#[derive(Clone, Debug)]
pub struct ResConv {
    pub first: ConvNormAct,
    pub second: ConvNormAct,
    pub skip: Conv,
}

impl ResConv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        let first = ConvNormAct::new(store, &format!("{name}.0"), |s, n| Conv::same3(s, n, cin, cout), cout);
        let second = ConvNormAct::new(store, &format!("{name}.1"), |s, n| Conv::same3(s, n, cout, cout), cout);
        let skip = Conv::pointwise(store, &format!("{name}.skip"), cin, cout);
        Self { first, second, skip }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = self.first.forward(g, p, x)?;
        let y = self.second.forward(g, p, y)?;
        let s = self.skip.forward(g, p, x)?;
        g.add(y, s)
    }
}

/// 2×2 max-pool followed by a residual conv block.
#[derive(Clone, Debug)]
pub struct Down {
    pub conv: ResConv,
}

impl Down {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        Self { conv: ResConv::new(store, name, cin, cout) }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let pooled = g.maxpool2d(x, 2)?;
        self.conv.forward(g, p, pooled)
    }
}

/// Bilinear 2× upsampling, concatenation with the encoder skip, residual conv.
#[derive(Clone, Debug)]
pub struct Up {
    pub conv: ResConv,
}

impl Up {
    /// `cin` counts the upsampled channels plus the skip channels.
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        Self { conv: ResConv::new(store, name, cin, cout) }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, skip: Var) -> Result<Var> {
        let up = g.upsample_bilinear2x(x)?;
        let cat = g.concat(&[skip, up], 1)?;
        self.conv.forward(g, p, cat)
    }
}

/// Final 1×1 projection to the output channel count.
#[derive(Clone, Debug)]
pub struct OutConv {
    pub conv: Conv,
}

impl OutConv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        Self { conv: Conv::pointwise(store, name, cin, cout) }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        self.conv.forward(g, p, x)
    }
}
