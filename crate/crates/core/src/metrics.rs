//! Image-quality and robustness metrics.
//!
//! Robustness is measured against the model's own clean-input output: for a
//! noise family with levels η₀ < … < η₃, the per-level score is the metric
//! between `G(a + η_k)` and `G(a)` averaged over the evaluation images, and
//! the area is `(η_max − η_min) · mean(scores)`.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Generator;
use crate::perturb::{level_schedule, Family};
use crate::tensor::Tensor;
use crate::Rng;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of pixel values.
pub const SSIM_RANGE: f64 = 1.0;

fn same_shape(x: &Tensor, y: &Tensor, what: &str) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::Dimension(format!("{what}: shapes {:?} and {:?} differ", x.shape(), y.shape())));
    }
    if x.numel() == 0 {
        return Err(Error::Dimension(format!("{what}: empty images")));
    }
    Ok(())
}

pub fn mse(x: &Tensor, y: &Tensor) -> Result<f64> {
    same_shape(x, y, "mse")?;
    let sum: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.numel() as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filtering of one `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let wo = w - n + 1;
    let ho = h - n + 1;
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..wo {
            rows[y * wo + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for (i, kv) in k.iter().enumerate() {
            let src = &rows[(y + i) * wo..(y + i + 1) * wo];
            for (o, s) in out[y * wo..(y + 1) * wo].iter_mut().zip(src) {
                *o += kv * s;
            }
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, k: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, h, w, k);
    let my = filter_valid(y, h, w, k);
    let exx = filter_valid(&xx, h, w, k);
    let eyy = filter_valid(&yy, h, w, k);
    let exy = filter_valid(&xy, h, w, k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = exx[i] - ux * ux;
        let vy = eyy[i] - uy * uy;
        let cxy = exy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// Mean SSIM over valid 11×11 Gaussian windows, averaged over channels (and
/// batch items for `[N, C, H, W]` input). Accepts `[H, W]`, `[C, H, W]` or
/// `[N, C, H, W]`.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    same_shape(x, y, "ssim")?;
    let s = x.shape();
    if s.len() < 2 || s.len() > 4 {
        return Err(Error::Dimension(format!("ssim needs an image tensor, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!("ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let k = gaussian_window();
    let planes = x.numel() / (h * w);
    let sum: f64 = x
        .data()
        .chunks(h * w)
        .zip(y.data().chunks(h * w))
        .map(|(a, b)| ssim_plane(a, b, h, w, &k))
        .sum();
    Ok(sum / planes as f64)
}

fn ssim_applicable(t: &Tensor) -> bool {
    let s = t.shape();
    s.len() >= 2 && s[s.len() - 2] >= SSIM_WINDOW && s[s.len() - 1] >= SSIM_WINDOW
}

/// `(η_max − η_min) · mean(scores)`.
pub fn area_metric(scores: &[f64], eta_min: f64, eta_max: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("area metric needs at least one score".into()));
    }
    if !(eta_max >= eta_min) {
        return Err(Error::InvalidArgument(format!("area metric range [{eta_min}, {eta_max}] is empty")));
    }
    Ok((eta_max - eta_min) * scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Anything mapping a `[N, C, H, W]` batch to an output batch.
pub trait Translator {
    fn translate(&self, x: &Tensor) -> Result<Tensor>;
}

/// Mean head without dropout.
impl Translator for Generator {
    fn translate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.predict(x, None)?.mean)
    }
}

impl<F: Fn(&Tensor) -> Result<Tensor>> Translator for F {
    fn translate(&self, x: &Tensor) -> Result<Tensor> {
        self(x)
    }
}

const EVAL_CHUNK: usize = 8;

/// Translate `[C, H, W]` images in chunks and return them unbatched.
pub fn translate_all(model: &dyn Translator, images: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let y = model.translate(&Tensor::stack_batch(chunk)?)?;
        for i in 0..chunk.len() {
            out.push(y.batch_item(i)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Ssim,
}

impl Metric {
    pub fn eval(self, x: &Tensor, y: &Tensor) -> Result<f64> {
        match self {
            Metric::Mse => mse(x, y),
            Metric::Ssim => ssim(x, y),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub metric: Metric,
    /// Strictly increasing η values.
    pub levels: Vec<f64>,
    pub scores: Vec<f64>,
    pub area: f64,
}

impl RobustnessCurve {
    pub fn new(metric: Metric, levels: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        if levels.len() != scores.len() || levels.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "curve needs one score per level, got {} levels and {} scores",
                levels.len(),
                scores.len()
            )));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!("curve levels must increase strictly: {levels:?}")));
        }
        let area = area_metric(&scores, levels[0], levels[levels.len() - 1])?;
        Ok(Self { metric, levels, scores, area })
    }
}

/// Per-family MSE and SSIM curves sharing one set of perturbed inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: Family,
    pub amse: RobustnessCurve,
    pub assim: RobustnessCurve,
}

impl FamilyReport {
    pub fn curve(&self, metric: Metric) -> &RobustnessCurve {
        match metric {
            Metric::Mse => &self.amse,
            Metric::Ssim => &self.assim,
        }
    }
}

/// RNG for the perturbations of one (family, level).
pub fn level_rng(seed: u64, family: Family, level: usize) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    let fam = Family::ALL.iter().position(|&f| f == family).unwrap_or(0) as u64;
    rng.set_stream(fam * 16 + level as u64);
    rng
}

/// Scores of `model` on `inputs` for every level of `family`. SSIM is skipped
/// (reported as NaN) for images smaller than the SSIM window.
pub fn evaluate_family(model: &dyn Translator, inputs: &[Tensor], family: Family, seed: u64) -> Result<FamilyReport> {
    if inputs.is_empty() {
        return Err(Error::Data("robustness evaluation needs at least one image".into()));
    }
    let clean = translate_all(model, inputs)?;
    let schedule = level_schedule(family);
    let mut mses = Vec::new();
    let mut ssims = Vec::new();
    for spec in schedule {
        let mut rng = level_rng(seed, family, spec.level);
        let noisy = inputs.iter().map(|x| spec.apply(x, &mut rng)).collect::<Result<Vec<_>>>()?;
        let out = translate_all(model, &noisy)?;
        let (mut m, mut s) = (0.0, 0.0);
        for (o, c) in out.iter().zip(&clean) {
            m += mse(o, c)?;
            s += if ssim_applicable(c) { ssim(o, c)? } else { f64::NAN };
        }
        mses.push(m / inputs.len() as f64);
        ssims.push(s / inputs.len() as f64);
    }
    let levels: Vec<f64> = schedule.iter().map(|s| s.parameter).collect();
    Ok(FamilyReport {
        family,
        amse: RobustnessCurve::new(Metric::Mse, levels.clone(), mses)?,
        assim: RobustnessCurve::new(Metric::Ssim, levels, ssims)?,
    })
}

pub fn amse(model: &dyn Translator, inputs: &[Tensor], family: Family, seed: u64) -> Result<RobustnessCurve> {
    Ok(evaluate_family(model, inputs, family, seed)?.amse)
}

pub fn assim(model: &dyn Translator, inputs: &[Tensor], family: Family, seed: u64) -> Result<RobustnessCurve> {
    Ok(evaluate_family(model, inputs, family, seed)?.assim)
}

/// Evaluation output written by the CLI as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub n_images: usize,
    pub families: Vec<FamilyReport>,
    /// Free-form echo of the run configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn evaluate(model: &dyn Translator, inputs: &[Tensor], families: &[Family], seed: u64) -> Result<Self> {
        let families = families
            .iter()
            .map(|&f| evaluate_family(model, inputs, f, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { seed, n_images: inputs.len(), families, config: serde_json::Value::Null })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("eval report: {e}")))
    }

    /// One row per (family, level): `family,level,eta,mse,ssim`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["family", "level", "eta", "mse", "ssim"]).map_err(csv_err)?;
        for f in &self.families {
            for (k, eta) in f.amse.levels.iter().enumerate() {
                w.write_record([
                    f.family.name().to_string(),
                    format!("NL{k}"),
                    eta.to_string(),
                    f.amse.scores[k].to_string(),
                    f.assim.scores[k].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Map each value to the index of the nearest palette entry (ties go to the
/// lower index).
pub fn quantize_labels(t: &Tensor, palette: &[f64]) -> Result<Vec<usize>> {
    if palette.is_empty() {
        return Err(Error::InvalidArgument("label palette is empty".into()));
    }
    Ok(t.data()
        .iter()
        .map(|&v| {
            let mut best = 0;
            for (i, &p) in palette.iter().enumerate() {
                if (v - p).abs() < (v - palette[best]).abs() {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Mean IoU and mean class accuracy over the classes present in `gt`.
pub fn iou_and_accuracy(pred: &[usize], gt: &[usize], n_classes: usize) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::Dimension(format!("label maps of length {} and {}", pred.len(), gt.len())));
    }
    if let Some(&bad) = pred.iter().chain(gt).find(|&&l| l >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {n_classes} classes")));
    }
    let mut inter = vec![0usize; n_classes];
    let mut n_pred = vec![0usize; n_classes];
    let mut n_gt = vec![0usize; n_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        n_pred[p] += 1;
        n_gt[g] += 1;
        if p == g {
            inter[p] += 1;
        }
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| n_gt[c] > 0).collect();
    let k = present.len() as f64;
    let iou = present.iter().map(|&c| inter[c] as f64 / (n_gt[c] + n_pred[c] - inter[c]) as f64).sum::<f64>() / k;
    let acc = present.iter().map(|&c| inter[c] as f64 / n_gt[c] as f64).sum::<f64>() / k;
    Ok((iou, acc))
}
