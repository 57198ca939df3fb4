use serde::{Deserialize, Serialize};

use super::blocks::{Conv, ConvNormAct, Down, OutConv, ResConv, Up};
use super::{maybe_dropout, Bound, ParamStore};
use crate::error::{Error, Result};
use crate::ggd::{ALPHA_MIN, BETA_MAX, BETA_MIN};
use crate::tensor::{Graph, Tensor, Var};
use crate::Rng;

/// Added to the predicted 1/α before inversion; caps α at 1000.
pub const ALPHA_EPS: f64 = 1e-3;
/// Added to the ReLU β head before clamping into `[BETA_MIN, BETA_MAX]`.
pub const BETA_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channels at the first (full-resolution) level; doubles per level.
    pub base_width: usize,
    /// Number of down/up levels in each U-Net.
    pub depth: usize,
    /// U-Nets in the chain; the last one is the three-headed one.
    pub cascade_len: usize,
    pub dropout_p: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { in_channels: 1, out_channels: 1, base_width: 16, depth: 3, cascade_len: 2, dropout_p: 0.2 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("generator config: {m}")));
        if self.depth < 1 {
            return bad("depth must be >= 1");
        }
        if self.cascade_len < 1 {
            return bad("cascade_len must be >= 1");
        }
        if self.base_width < 4 {
            return bad("base_width must be >= 4");
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Encoder/decoder U-Net built from residual conv blocks. Dropout sits after
/// the deepest encoder block and after the deepest decoder block.
#[derive(Clone, Debug)]
pub struct UNet {
    inc: ResConv,
    downs: Vec<Down>,
    ups: Vec<Up>,
    out: Option<OutConv>,
    depth: usize,
    dropout_p: f64,
}

impl UNet {
    fn build(store: &mut ParamStore, name: &str, cin: usize, cout: Option<usize>, cfg: &GeneratorConfig) -> Self {
        let w = cfg.base_width;
        let width = |level: usize| w << level;
        let inc = ResConv::new(store, &format!("{name}.inc"), cin, w);
        let downs = (0..cfg.depth)
            .map(|i| Down::new(store, &format!("{name}.down{i}"), width(i), width(i + 1)))
            .collect();
        let ups = (1..=cfg.depth)
            .rev()
            .map(|l| Up::new(store, &format!("{name}.up{}", l - 1), width(l) + width(l - 1), width(l - 1)))
            .collect();
        let out = cout.map(|c| OutConv::new(store, &format!("{name}.out"), w, c));
        Self { inc, downs, ups, out, depth: cfg.depth, dropout_p: cfg.dropout_p }
    }

    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, cfg: &GeneratorConfig) -> Self {
        Self::build(store, name, cin, Some(cout), cfg)
    }

    fn check_spatial(&self, g: &Graph, x: Var) -> Result<()> {
        let s = g.shape(x);
        let m = 1 << self.depth;
        if s.len() != 4 || s[2] % m != 0 || s[3] % m != 0 || s[2] == 0 || s[3] == 0 {
            return Err(Error::Dimension(format!(
                "U-Net of depth {} needs NCHW input with H, W divisible by {m}; got {s:?}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Decoder output at full resolution, `base_width` channels.
    pub fn features(&self, g: &mut Graph, p: &Bound, x: Var, mut rng: Option<&mut Rng>) -> Result<Var> {
        self.check_spatial(g, x)?;
        let mut skips = vec![self.inc.forward(g, p, x)?];
        let mut h = skips[0];
        for (i, down) in self.downs.iter().enumerate() {
            h = down.forward(g, p, h)?;
            if i + 1 == self.depth {
                h = maybe_dropout(g, h, self.dropout_p, rng.as_deref_mut())?;
            } else {
                skips.push(h);
            }
            debug_assert_eq!(g.shape(h)[2] * (1 << (i + 1)), g.shape(x)[2]);
        }
        for (j, up) in self.ups.iter().enumerate() {
            let skip = skips[self.depth - 1 - j];
            h = up.forward(g, p, h, skip)?;
            if j == 0 {
                h = maybe_dropout(g, h, self.dropout_p, rng.as_deref_mut())?;
            }
        }
        Ok(h)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, rng: Option<&mut Rng>) -> Result<Var> {
        let h = self.features(g, p, x, rng)?;
        match &self.out {
            Some(out) => out.forward(g, p, h),
            None => Ok(h),
        }
    }
}

#[derive(Clone, Debug)]
struct Head {
    block: ConvNormAct,
    out: OutConv,
}

impl Head {
    fn new(store: &mut ParamStore, name: &str, width: usize, cout: usize) -> Self {
        Self {
            block: ConvNormAct::new(store, &format!("{name}.block"), |s, n| Conv::same3(s, n, width, width), width),
            out: OutConv::new(store, &format!("{name}.out"), width, cout),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.block.forward(g, p, x)?;
        self.out.forward(g, p, h)
    }
}

/// U-Net whose final blocks split into mean, 1/α and β heads over a shared
/// backbone. The 1/α and β heads end in ReLU.
#[derive(Clone, Debug)]
pub struct UNet3Head {
    backbone: UNet,
    mean: Head,
    inv_alpha: Head,
    beta: Head,
}

/// Raw head outputs: `inv_alpha` and `beta` are nonnegative.
#[derive(Clone, Copy, Debug)]
pub struct ThreeHeadOutput {
    pub mean: Var,
    pub inv_alpha: Var,
    pub beta: Var,
}

impl UNet3Head {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, cfg: &GeneratorConfig) -> Self {
        let backbone = UNet::build(store, &format!("{name}.backbone"), cin, None, cfg);
        let w = cfg.base_width;
        Self {
            backbone,
            mean: Head::new(store, &format!("{name}.head_mean"), w, cout),
            inv_alpha: Head::new(store, &format!("{name}.head_inv_alpha"), w, cout),
            beta: Head::new(store, &format!("{name}.head_beta"), w, cout),
        }
    }

    /// Start the 1/α and β heads at 1, so a fresh network predicts
    /// (α, β) ≈ (1, 1) and its cycle loss begins as plain L1.
    fn init_head_biases(&self, store: &mut ParamStore) {
        for head in [&self.inv_alpha, &self.beta] {
            store.values_mut()[head.out.conv.bias.0].data_mut().fill(1.0);
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, rng: Option<&mut Rng>) -> Result<ThreeHeadOutput> {
        let h = self.backbone.features(g, p, x, rng)?;
        let mean = self.mean.forward(g, p, h)?;
        let inv_alpha = self.inv_alpha.forward(g, p, h)?;
        let beta = self.beta.forward(g, p, h)?;
        Ok(ThreeHeadOutput { mean, inv_alpha: g.relu(inv_alpha), beta: g.relu(beta) })
    }
}

/// Per-pixel GGD parameter maps ready for the likelihood loss.
#[derive(Clone, Copy, Debug)]
pub struct GgdMaps {
    pub mean: Var,
    pub alpha: Var,
    pub beta: Var,
}

/// `α = 1/(inv_alpha + 1e-3)` and `β = clamp(β_head + 1e-2, 1e-2, 10)`.
pub fn to_ggd_params(g: &mut Graph, out: ThreeHeadOutput) -> Result<GgdMaps> {
    let shifted = g.add_scalar(out.inv_alpha, ALPHA_EPS);
    let alpha = g.recip(shifted)?;
    let alpha = g.clamp(alpha, ALPHA_MIN, f64::INFINITY);
    let beta = g.add_scalar(out.beta, BETA_FLOOR);
    let beta = g.clamp(beta, BETA_MIN, BETA_MAX);
    Ok(GgdMaps { mean: out.mean, alpha, beta })
}

/// Tensor-valued generator output.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub mean: Tensor,
    pub alpha: Tensor,
    pub beta: Tensor,
}

/// Cascaded U-Net generator: `cascade_len − 1` plain U-Nets, each adding its
/// output to its input, followed by a three-headed U-Net.
#[derive(Clone, Debug)]
pub struct Generator {
    cfg: GeneratorConfig,
    store: ParamStore,
    cascade: Vec<UNet>,
    head: UNet3Head,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let cascade = (0..cfg.cascade_len - 1)
            .map(|i| UNet::new(&mut store, &format!("unet{i}"), cfg.in_channels, cfg.in_channels, &cfg))
            .collect();
        let head = UNet3Head::new(&mut store, "unet3head", cfg.in_channels, cfg.out_channels, &cfg);
        store.init_weights(rng);
        head.init_head_biases(&mut store);
        Ok(Self { cfg, store, cascade, head })
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    /// Dropout is active exactly when `rng` is provided.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, mut rng: Option<&mut Rng>) -> Result<ThreeHeadOutput> {
        if g.shape(x).get(1) != Some(&self.cfg.in_channels) {
            return Err(Error::Dimension(format!(
                "generator expects {} input channels, got shape {:?}",
                self.cfg.in_channels,
                g.shape(x)
            )));
        }
        let mut h = x;
        for unet in &self.cascade {
            let refined = unet.forward(g, p, h, rng.as_deref_mut())?;
            h = g.add(h, refined)?;
        }
        self.head.forward(g, p, h, rng)
    }

    pub fn forward_ggd(&self, g: &mut Graph, p: &Bound, x: Var, rng: Option<&mut Rng>) -> Result<GgdMaps> {
        let out = self.forward(g, p, x, rng)?;
        to_ggd_params(g, out)
    }

    /// Inference on a `[N, C, H, W]` batch with frozen parameters.
    pub fn predict(&self, x: &Tensor, rng: Option<&mut Rng>) -> Result<Prediction> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let maps = self.forward_ggd(&mut g, &p, xv, rng)?;
        Ok(Prediction {
            mean: g.value(maps.mean).clone(),
            alpha: g.value(maps.alpha).clone(),
            beta: g.value(maps.beta).clone(),
        })
    }
}
