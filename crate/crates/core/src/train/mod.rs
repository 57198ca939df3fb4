//! Adversarial cycle training of two generators and two discriminators.
//!
//! `G_A: A → B`, `G_B: B → A`. `D_A` judges domain-B images and `D_B`
//! domain-A images. Each step updates both generators on
//! `λ₁·L_cyc + λ₂·L_adv^G`, then both discriminators on replayed fakes.

mod buffer;
mod optim;

pub use buffer::ReplayBuffer;
pub use optim::{cosine_lr, Adam, AdamConfig};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{augment_flip, UnpairedDataset};
use crate::error::{Error, Result};
use crate::losses::{
    adv_discriminator_loss, adv_generator_loss, loss_ucyc, total_generator_loss, CycleTerms, LossWeights,
};
use crate::nets::{Checkpoint, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::tensor::{Graph, Tensor, Var};
use crate::Rng;

/// Which cycle loss drives the generators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleMode {
    /// GGD likelihood with predicted α and β.
    #[default]
    Ugac,
    /// Same loss with α and β fixed to 1, i.e. the L1 cycle loss.
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub weights: LossWeights,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub cycle: CycleMode,
    /// Random horizontal/vertical flips, drawn per image.
    pub augment: bool,
    /// Write a numbered checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 2,
            lr0: 2e-4,
            adam_betas: (0.9, 0.99),
            adam_eps: 1e-8,
            weights: LossWeights::default(),
            buffer_capacity: 20,
            seed: 0,
            cycle: CycleMode::Ugac,
            augment: true,
            checkpoint_every: 0,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad(format!("epochs and batch_size must be positive ({}, {})", self.epochs, self.batch_size));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || !(self.adam_eps > 0.0) {
            return bad(format!("adam betas must lie in [0, 1) and eps be positive, got {:?}", (b1, b2, self.adam_eps)));
        }
        self.weights.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.generator.in_channels != self.generator.out_channels {
            return bad("cycle training needs generator in_channels == out_channels".into());
        }
        if self.discriminator.in_channels != self.generator.out_channels {
            return bad("discriminator in_channels must equal generator out_channels".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_betas.0, beta2: self.adam_betas.1, eps: self.adam_eps }
    }
}

/// Loss components of one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss_g: f64,
    pub loss_d: f64,
    pub loss_ucyc: f64,
    pub loss_adv_g: f64,
    pub lr: f64,
}

/// Per-epoch means of [`StepMetrics`]; `lr` is the last step's rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    pub loss_ucyc: f64,
    pub loss_adv_g: f64,
    pub lr: f64,
}

pub const METRICS_HEADER: [&str; 6] = ["epoch", "loss_g", "loss_d", "loss_ucyc", "loss_adv_g", "lr"];

/// Fakes produced by the generator phase, for the discriminator phase.
#[derive(Clone, Debug)]
pub struct Fakes {
    pub fake_a: Tensor,
    pub fake_b: Tensor,
}

pub struct Trainer {
    cfg: TrainConfig,
    pub g_a: Generator,
    pub g_b: Generator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
    opt_g_a: Adam,
    opt_g_b: Adam,
    opt_d_a: Adam,
    opt_d_b: Adam,
    buf_a: ReplayBuffer,
    buf_b: ReplayBuffer,
    step: u64,
    epochs_done: usize,
}

fn finite(name: &str, v: f64, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} = {v} at step {step}")))
    }
}

fn grads_of(grads: &crate::tensor::Gradients, vars: &[Var], g: &Graph) -> Vec<Vec<f64>> {
    vars.iter()
        .map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
        .collect()
}

impl Trainer {
    /// Initialize all four networks from `cfg.seed`.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::seed_from_u64(cfg.seed);
        let g_a = Generator::new(cfg.generator.clone(), &mut rng)?;
        let g_b = Generator::new(cfg.generator.clone(), &mut rng)?;
        let d_a = Discriminator::new(cfg.discriminator.clone(), &mut rng)?;
        let d_b = Discriminator::new(cfg.discriminator.clone(), &mut rng)?;
        let adam = cfg.adam();
        Ok(Self {
            opt_g_a: Adam::new(adam, g_a.params().values()),
            opt_g_b: Adam::new(adam, g_b.params().values()),
            opt_d_a: Adam::new(adam, d_a.params().values()),
            opt_d_b: Adam::new(adam, d_b.params().values()),
            buf_a: ReplayBuffer::new(cfg.buffer_capacity),
            buf_b: ReplayBuffer::new(cfg.buffer_capacity),
            g_a,
            g_b,
            d_a,
            d_b,
            cfg,
            step: 0,
            epochs_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn buffers(&self) -> (&ReplayBuffer, &ReplayBuffer) {
        (&self.buf_a, &self.buf_b)
    }

    /// Update both generators against frozen discriminators. Returns
    /// `(metrics without loss_d, fakes)`.
    pub fn generator_phase(&mut self, a: &Tensor, b: &Tensor, lr: f64, rng: &mut Rng) -> Result<(StepMetrics, Fakes)> {
        let mut g = Graph::new();
        let pa = self.g_a.bind(&mut g, true);
        let pb = self.g_b.bind(&mut g, true);
        let da = self.d_a.bind(&mut g, false);
        let db = self.d_b.bind(&mut g, false);
        let av = g.constant(a.clone());
        let bv = g.constant(b.clone());

        let fake_b = self.g_a.forward_ggd(&mut g, &pa, av, Some(&mut *rng))?;
        let rec_a = self.g_b.forward_ggd(&mut g, &pb, fake_b.mean, Some(&mut *rng))?;
        let fake_a = self.g_b.forward_ggd(&mut g, &pb, bv, Some(&mut *rng))?;
        let rec_b = self.g_a.forward_ggd(&mut g, &pa, fake_a.mean, Some(&mut *rng))?;

        let (terms_a, terms_b) = match self.cfg.cycle {
            CycleMode::Ugac => (
                CycleTerms { recon: rec_a.mean, alpha: rec_a.alpha, beta: rec_a.beta, target: av },
                CycleTerms { recon: rec_b.mean, alpha: rec_b.alpha, beta: rec_b.beta, target: bv },
            ),
            CycleMode::L1 => {
                let ones_a = g.constant(Tensor::ones(a.shape().to_vec()));
                let ones_b = g.constant(Tensor::ones(b.shape().to_vec()));
                (
                    CycleTerms { recon: rec_a.mean, alpha: ones_a, beta: ones_a, target: av },
                    CycleTerms { recon: rec_b.mean, alpha: ones_b, beta: ones_b, target: bv },
                )
            }
        };
        let ucyc = loss_ucyc(&mut g, terms_a, terms_b)?;
        let score_fake_b = self.d_a.forward(&mut g, &da, fake_b.mean)?;
        let score_fake_a = self.d_b.forward(&mut g, &db, fake_a.mean)?;
        let adv = adv_generator_loss(&mut g, score_fake_b, score_fake_a)?;
        let total = total_generator_loss(&mut g, ucyc, adv, self.cfg.weights)?;

        let loss_g = finite("generator loss", g.value(total).item()?, self.step)?;
        let grads = g.backward(total)?;
        let ga = grads_of(&grads, pa.vars(), &g);
        let gb = grads_of(&grads, pb.vars(), &g);
        self.opt_g_a.step(self.g_a.params_mut().values_mut(), &ga, lr)?;
        self.opt_g_b.step(self.g_b.params_mut().values_mut(), &gb, lr)?;

        let metrics = StepMetrics {
            loss_g,
            loss_d: f64::NAN,
            loss_ucyc: g.value(ucyc).item()?,
            loss_adv_g: g.value(adv).item()?,
            lr,
        };
        let fakes = Fakes { fake_a: g.value(fake_a.mean).clone(), fake_b: g.value(fake_b.mean).clone() };
        Ok((metrics, fakes))
    }

    fn replay(buf: &mut ReplayBuffer, fakes: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        let n = fakes.shape()[0];
        let picked = (0..n).map(|i| Ok(buf.push_sample(fakes.batch_item(i)?, rng))).collect::<Result<Vec<_>>>()?;
        Tensor::stack_batch(&picked)
    }

    /// Update both discriminators on real images and replayed fakes. Returns `L^D`.
    pub fn discriminator_phase(&mut self, a: &Tensor, b: &Tensor, fakes: &Fakes, lr: f64, rng: &mut Rng) -> Result<f64> {
        let hist_b = Self::replay(&mut self.buf_b, &fakes.fake_b, rng)?;
        let hist_a = Self::replay(&mut self.buf_a, &fakes.fake_a, rng)?;
        let mut g = Graph::new();
        let da = self.d_a.bind(&mut g, true);
        let db = self.d_b.bind(&mut g, true);
        let inputs = [b.clone(), hist_b, a.clone(), hist_a].map(|t| g.constant(t));
        let s_b_real = self.d_a.forward(&mut g, &da, inputs[0])?;
        let s_b_fake = self.d_a.forward(&mut g, &da, inputs[1])?;
        let s_a_real = self.d_b.forward(&mut g, &db, inputs[2])?;
        let s_a_fake = self.d_b.forward(&mut g, &db, inputs[3])?;
        let loss = adv_discriminator_loss(&mut g, s_b_real, s_b_fake, s_a_real, s_a_fake)?;
        let loss_d = finite("discriminator loss", g.value(loss).item()?, self.step)?;
        let grads = g.backward(loss)?;
        let ga = grads_of(&grads, da.vars(), &g);
        let gb = grads_of(&grads, db.vars(), &g);
        self.opt_d_a.step(self.d_a.params_mut().values_mut(), &ga, lr)?;
        self.opt_d_b.step(self.d_b.params_mut().values_mut(), &gb, lr)?;
        Ok(loss_d)
    }

    /// One generator update followed by one discriminator update on
    /// `[N, C, H, W]` batches.
    pub fn train_step(&mut self, a: &Tensor, b: &Tensor, lr: f64, rng: &mut Rng) -> Result<StepMetrics> {
        let (mut metrics, fakes) = self.generator_phase(a, b, lr, rng)?;
        metrics.loss_d = self.discriminator_phase(a, b, &fakes, lr, rng)?;
        self.step += 1;
        Ok(metrics)
    }

    pub fn steps_per_epoch(&self, ds: &UnpairedDataset) -> usize {
        (ds.domain_a.len().max(ds.domain_b.len()) / self.cfg.batch_size).max(1)
    }

    /// RNG driving epoch `epoch` (0-based): shuffles, flips, dropout, replay.
    pub fn epoch_rng(&self, epoch: usize) -> Rng {
        let mut rng = Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    fn batch(&self, images: &[Tensor], order: &[usize], start: usize, rng: &mut Rng) -> Result<Tensor> {
        let items = (0..self.cfg.batch_size)
            .map(|i| {
                let img = &images[order[(start + i) % order.len()]];
                if self.cfg.augment {
                    augment_flip(img, rng)
                } else {
                    Ok(img.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack_batch(&items)
    }

    /// Run one epoch (index `self.epochs_done`).
    pub fn run_epoch(&mut self, ds: &UnpairedDataset) -> Result<EpochLog> {
        let epoch = self.epochs_done;
        let steps = self.steps_per_epoch(ds);
        let total = (self.cfg.epochs * steps) as u64;
        let mut rng = self.epoch_rng(epoch);
        let mut order_a: Vec<usize> = (0..ds.domain_a.len()).collect();
        let mut order_b: Vec<usize> = (0..ds.domain_b.len()).collect();
        order_a.shuffle(&mut rng);
        order_b.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut lr = self.cfg.lr0;
        for s in 0..steps {
            let start = s * self.cfg.batch_size;
            let a = self.batch(&ds.domain_a, &order_a, start, &mut rng)?;
            let b = self.batch(&ds.domain_b, &order_b, start, &mut rng)?;
            lr = cosine_lr(self.step, total, self.cfg.lr0);
            let m = self.train_step(&a, &b, lr, &mut rng)?;
            for (acc, v) in sums.iter_mut().zip([m.loss_g, m.loss_d, m.loss_ucyc, m.loss_adv_g]) {
                *acc += v;
            }
        }
        self.epochs_done += 1;
        let n = steps as f64;
        Ok(EpochLog {
            epoch: self.epochs_done,
            loss_g: sums[0] / n,
            loss_d: sums[1] / n,
            loss_ucyc: sums[2] / n,
            loss_adv_g: sums[3] / n,
            lr,
        })
    }

    /// Train up to `cfg.epochs`, appending to `out/metrics.csv` and writing
    /// checkpoints into `out` when given. Resumes from `epochs_done`.
    pub fn fit(&mut self, ds: &UnpairedDataset, out: Option<&Path>) -> Result<Vec<EpochLog>> {
        ds.validate()?;
        let (c, h, w) = ds.image_shape();
        if c != self.cfg.generator.in_channels {
            return Err(Error::Data(format!(
                "dataset has {c} channels, generator expects {}",
                self.cfg.generator.in_channels
            )));
        }
        let m = 1usize << self.cfg.generator.depth.max(self.cfg.discriminator.n_layers);
        if h % m != 0 || w % m != 0 {
            return Err(Error::Data(format!("image size {h}x{w} must be divisible by {m} for this network")));
        }
        let mut writer = match out {
            Some(dir) => Some(MetricsWriter::open(dir, self.epochs_done > 0)?),
            None => None,
        };
        let mut logs = Vec::new();
        while self.epochs_done < self.cfg.epochs {
            let log = self.run_epoch(ds)?;
            if let Some(wr) = writer.as_mut() {
                wr.write(&log)?;
            }
            if let Some(dir) = out {
                let every = self.cfg.checkpoint_every;
                if every > 0 && log.epoch % every == 0 {
                    self.save(&dir.join(format!("epoch_{:04}.ckpt", log.epoch)))?;
                }
            }
            logs.push(log);
        }
        if let Some(dir) = out {
            self.save(&dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(logs)
    }

    /// Mean over images of `mean|G_B(G_A(a)) − a|` plus the same for B,
    /// without dropout.
    pub fn cycle_l1(&self, ds: &UnpairedDataset) -> Result<f64> {
        let side = |images: &[Tensor], first: &Generator, second: &Generator| -> Result<f64> {
            let mut total = 0.0;
            for chunk in images.chunks(8) {
                let x = Tensor::stack_batch(chunk)?;
                let fwd = first.predict(&x, None)?;
                let back = second.predict(&fwd.mean, None)?;
                total += back.mean.zip_map(&x, |r, t| (r - t).abs())?.sum() / (x.numel() / chunk.len()) as f64;
            }
            Ok(total / images.len() as f64)
        };
        Ok(side(&ds.domain_a, &self.g_a, &self.g_b)? + side(&ds.domain_b, &self.g_b, &self.g_a)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "kind": CHECKPOINT_KIND,
            "config": self.cfg,
            "epochs_done": self.epochs_done,
            "step": self.step,
            "buffer_a_len": self.buf_a.len(),
            "buffer_b_len": self.buf_b.len(),
        });
        let mut ck = Checkpoint::new(meta);
        ck.extend(self.g_a.params().export("g_a."));
        ck.extend(self.g_b.params().export("g_b."));
        ck.extend(self.d_a.params().export("d_a."));
        ck.extend(self.d_b.params().export("d_b."));
        ck.extend(self.opt_g_a.export("opt.g_a."));
        ck.extend(self.opt_g_b.export("opt.g_b."));
        ck.extend(self.opt_d_a.export("opt.d_a."));
        ck.extend(self.opt_d_b.export("opt.d_b."));
        for (name, buf) in [("buf_a", &self.buf_a), ("buf_b", &self.buf_b)] {
            ck.extend(buf.images().enumerate().map(|(i, t)| (format!("{name}.{i}"), t.clone())));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = checkpoint_config(ck)?;
        let mut t = Self::new(cfg)?;
        let map = ck.to_map();
        t.g_a.params_mut().import("g_a.", &map)?;
        t.g_b.params_mut().import("g_b.", &map)?;
        t.d_a.params_mut().import("d_a.", &map)?;
        t.d_b.params_mut().import("d_b.", &map)?;
        let get = |k: &str| map.get(k).cloned();
        t.opt_g_a.import("opt.g_a.", get)?;
        t.opt_g_b.import("opt.g_b.", get)?;
        t.opt_d_a.import("opt.d_a.", get)?;
        t.opt_d_b.import("opt.d_b.", get)?;
        let meta_usize = |key: &str| -> Result<usize> {
            ck.meta[key]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Data(format!("checkpoint metadata lacks {key}")))
        };
        t.epochs_done = meta_usize("epochs_done")?;
        t.step = meta_usize("step")? as u64;
        let restore = |name: &str, len: usize| -> Result<ReplayBuffer> {
            let images = (0..len)
                .map(|i| map.get(&format!("{name}.{i}")).cloned().ok_or_else(|| Error::Data(format!("missing {name}.{i}"))))
                .collect::<Result<Vec<_>>>()?;
            Ok(ReplayBuffer::restore(t.cfg.buffer_capacity, images))
        };
        t.buf_a = restore("buf_a", meta_usize("buffer_a_len")?)?;
        t.buf_b = restore("buf_b", meta_usize("buffer_b_len")?)?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub const CHECKPOINT_KIND: &str = "ugac-trainer";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";

fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    if ck.meta["kind"] != CHECKPOINT_KIND {
        return Err(Error::Data(format!("checkpoint kind is {}, expected {CHECKPOINT_KIND}", ck.meta["kind"])));
    }
    serde_json::from_value(ck.meta["config"].clone()).map_err(|e| Error::Data(format!("checkpoint config: {e}")))
}

/// Load only the two generators from a training checkpoint.
pub fn load_generators(path: &Path) -> Result<(Generator, Generator)> {
    let ck = Checkpoint::load(path)?;
    let cfg = checkpoint_config(&ck)?;
    let map = ck.to_map();
    let mut rng = Rng::seed_from_u64(0);
    let mut g_a = Generator::new(cfg.generator.clone(), &mut rng)?;
    let mut g_b = Generator::new(cfg.generator, &mut rng)?;
    g_a.params_mut().import("g_a.", &map)?;
    g_b.params_mut().import("g_b.", &map)?;
    Ok((g_a, g_b))
}

struct MetricsWriter {
    inner: csv::Writer<fs::File>,
    path: PathBuf,
}

impl MetricsWriter {
    fn open(dir: &Path, append: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let exists = path.exists();
        let file = fs::OpenOptions::new()
            .create(true)
            .append(append)
            .write(true)
            .truncate(!append)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        if !(append && exists) {
            inner.write_record(METRICS_HEADER).map_err(|e| Error::Data(e.to_string()))?;
            inner.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self { inner, path })
    }

    fn write(&mut self, log: &EpochLog) -> Result<()> {
        let row = [
            log.epoch.to_string(),
            log.loss_g.to_string(),
            log.loss_d.to_string(),
            log.loss_ucyc.to_string(),
            log.loss_adv_g.to_string(),
            log.lr.to_string(),
        ];
        self.inner.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_shapes_dataset;

    pub(crate) fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            generator: GeneratorConfig { base_width: 4, depth: 2, cascade_len: 1, ..Default::default() },
            discriminator: DiscriminatorConfig { base_width: 4, n_layers: 1, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = tiny_config();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = TrainConfig::from_toml("epochs = 3\ncycle = \"l1\"\n").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.cycle, CycleMode::L1);
        assert_eq!(partial.batch_size, 2);
        assert!(TrainConfig::from_toml("epoch = 3").is_err());
        assert!(TrainConfig::from_toml("batch_size = 0").is_err());
    }

    #[test]
    fn phases_touch_only_their_networks() {
        let ds = synth_shapes_dataset(2, 16, 0).unwrap();
        let mut t = Trainer::new(tiny_config()).unwrap();
        let a = Tensor::stack_batch(&ds.domain_a).unwrap();
        let b = Tensor::stack_batch(&ds.domain_b).unwrap();
        let mut rng = Rng::seed_from_u64(0);
        let d_hash = (t.d_a.params().fingerprint(), t.d_b.params().fingerprint());
        let g_hash = (t.g_a.params().fingerprint(), t.g_b.params().fingerprint());
        let (_, fakes) = t.generator_phase(&a, &b, 1e-3, &mut rng).unwrap();
        assert_eq!((t.d_a.params().fingerprint(), t.d_b.params().fingerprint()), d_hash);
        let g_after = (t.g_a.params().fingerprint(), t.g_b.params().fingerprint());
        assert_ne!(g_after.0, g_hash.0);
        assert_ne!(g_after.1, g_hash.1);
        t.discriminator_phase(&a, &b, &fakes, 1e-3, &mut rng).unwrap();
        assert_eq!((t.g_a.params().fingerprint(), t.g_b.params().fingerprint()), g_after);
        assert_ne!(t.d_a.params().fingerprint(), d_hash.0);
        assert!(t.buffers().0.len() <= 20);
    }

    #[test]
    fn checkpoint_restores_full_state() {
        let ds = synth_shapes_dataset(4, 16, 1).unwrap();
        let mut t = Trainer::new(TrainConfig { epochs: 1, ..tiny_config() }).unwrap();
        t.fit(&ds, None).unwrap();
        let ck = t.to_checkpoint();
        let back = Trainer::from_checkpoint(&ck).unwrap();
        assert_eq!(back.to_checkpoint(), ck);
    }
}
