use serde::{Deserialize, Serialize};

use super::blocks::{Conv, ConvNormAct, LEAKY_SLOPE};
use super::{Bound, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};
use crate::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub base_width: usize,
    /// Number of stride-2 layers.
    pub n_layers: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { in_channels: 1, base_width: 16, n_layers: 2 }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 || self.base_width == 0 || self.in_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "discriminator config needs n_layers >= 1 and positive widths; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Side length of the input patch that determines one output score.
    pub fn receptive_field(&self) -> usize {
        // Two stride-1 k4 layers on top of n stride-2 k4 layers.
        let mut rf = 1;
        let mut jump = 1;
        let strides = std::iter::repeat(2).take(self.n_layers).chain([1, 1]);
        for s in strides {
            rf += 3 * jump;
            jump *= s;
        }
        rf
    }
}

const KERNEL: usize = 4;
const WIDTH_CAP: usize = 8;

/// PatchGAN discriminator emitting one unbounded least-squares score per
/// overlapping patch.
#[derive(Clone, Debug)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    store: ParamStore,
    stem: Conv,
    body: Vec<ConvNormAct>,
    score: Conv,
}

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let w = cfg.base_width;
        let stem = Conv::new(&mut store, "stem", cfg.in_channels, w, KERNEL, 2, 1);
        let mut body = Vec::new();
        let mut cin = w;
        for i in 1..=cfg.n_layers {
            let stride = if i < cfg.n_layers { 2 } else { 1 };
            let cout = w * (1 << i).min(WIDTH_CAP);
            body.push(ConvNormAct::new(
                &mut store,
                &format!("layer{i}"),
                |s, n| Conv::new(s, n, cin, cout, KERNEL, stride, 1),
                cout,
            ));
            cin = cout;
        }
        let score = Conv::new(&mut store, "score", cin, 1, KERNEL, 1, 1);
        store.init_weights(rng);
        Ok(Self { cfg, store, stem, body, score })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.store.bind(g, trainable)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let rf = self.cfg.receptive_field();
        let m = 1 << self.cfg.n_layers;
        if s.len() != 4 || s[1] != self.cfg.in_channels {
            return Err(Error::Dimension(format!(
                "discriminator expects [N, {}, H, W], got {s:?}",
                self.cfg.in_channels
            )));
        }
        if s[2] < rf || s[3] < rf {
            return Err(Error::Dimension(format!("input {}x{} smaller than the {rf}x{rf} receptive field", s[2], s[3])));
        }
        if s[2] % m != 0 || s[3] % m != 0 {
            return Err(Error::Dimension(format!("discriminator input sides must be divisible by {m}, got {s:?}")));
        }
        let h = self.stem.forward(g, p, x)?;
        let mut h = g.leaky_relu(h, LEAKY_SLOPE);
        for layer in &self.body {
            h = layer.forward(g, p, h)?;
        }
        self.score.forward(g, p, h)
    }

    /// Score map for a batch with frozen parameters.
    pub fn score(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &p, xv)?;
        Ok(g.value(y).clone())
    }
}
