//! Predictive uncertainty: closed-form aleatoric variance from the predicted
//! scale and shape, Monte-Carlo dropout epistemic variance, and the
//! correlation between per-image uncertainty and residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggd::aleatoric_variance;
use crate::nets::{Generator, Prediction};
use crate::tensor::Tensor;
use crate::Rng;

/// Passes used for epistemic variance unless configured otherwise.
pub const DEFAULT_MC_SAMPLES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMaps {
    pub aleatoric: Tensor,
    pub epistemic: Tensor,
    pub total: Tensor,
}

impl UncertaintyMaps {
    /// Per-pixel standard deviation `√total`.
    pub fn sigma(&self) -> Tensor {
        self.total.map(f64::sqrt)
    }
}

pub fn aleatoric_map(alpha: &Tensor, beta: &Tensor) -> Result<Tensor> {
    if alpha.shape() != beta.shape() {
        return Err(Error::Dimension(format!("alpha {:?} and beta {:?} maps differ", alpha.shape(), beta.shape())));
    }
    let data = alpha
        .data()
        .iter()
        .zip(beta.data())
        .map(|(&a, &b)| aleatoric_variance(a, b))
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(alpha.shape().to_vec(), data)
}

/// Population variance (divide by T) across passes, accumulated with
/// Welford's update.
pub fn pass_variance<'a>(passes: impl IntoIterator<Item = &'a Tensor>) -> Result<Tensor> {
    let mut it = passes.into_iter();
    let first = it.next().ok_or_else(|| Error::InvalidArgument("variance needs at least one pass".into()))?;
    let mut mean = first.data().to_vec();
    let mut m2 = vec![0.0; mean.len()];
    let mut t = 1.0;
    for p in it {
        if p.shape() != first.shape() {
            return Err(Error::Dimension(format!("pass shapes {:?} and {:?} differ", first.shape(), p.shape())));
        }
        t += 1.0;
        for ((m, s), &x) in mean.iter_mut().zip(&mut m2).zip(p.data()) {
            let d = x - *m;
            *m += d / t;
            *s += d * (x - *m);
        }
    }
    Tensor::new(first.shape().to_vec(), m2.into_iter().map(|s| s / t).collect())
}

/// Variance of the mean head over `t` dropout-active forward passes.
pub fn epistemic_map(model: &Generator, input: &Tensor, t: usize, rng: &mut Rng) -> Result<Tensor> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("epistemic variance needs at least 2 passes, got {t}")));
    }
    let mut passes = Vec::with_capacity(t);
    for _ in 0..t {
        passes.push(model.predict(input, Some(rng))?.mean);
    }
    pass_variance(&passes)
}

pub fn total_uncertainty(aleatoric: Tensor, epistemic: Tensor) -> Result<UncertaintyMaps> {
    let total = aleatoric.zip_map(&epistemic, |a, e| a + e)?;
    Ok(UncertaintyMaps { aleatoric, epistemic, total })
}

/// Deterministic prediction plus its uncertainty maps. Epistemic variance is
/// zero when `mc_samples` is `None`.
pub fn predict_with_uncertainty(
    model: &Generator,
    input: &Tensor,
    mc_samples: Option<usize>,
    rng: &mut Rng,
) -> Result<(Prediction, UncertaintyMaps)> {
    let pred = model.predict(input, None)?;
    let aleatoric = aleatoric_map(&pred.alpha, &pred.beta)?;
    let epistemic = match mc_samples {
        Some(t) => epistemic_map(model, input, t, rng)?,
        None => Tensor::zeros(aleatoric.shape().to_vec()),
    };
    let maps = total_uncertainty(aleatoric, epistemic)?;
    Ok((pred, maps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Per-image mean |prediction − ground truth|.
    pub mean_residual: Vec<f64>,
    /// Per-image mean σ = √total.
    pub mean_sigma: Vec<f64>,
    pub pearson: f64,
    pub spearman: f64,
}

pub fn uncertainty_residual_stats(predictions: &[Tensor], ground_truth: &[Tensor], totals: &[Tensor]) -> Result<ResidualStats> {
    let n = predictions.len();
    if ground_truth.len() != n || totals.len() != n {
        return Err(Error::InvalidArgument(format!(
            "got {n} predictions, {} targets and {} uncertainty maps",
            ground_truth.len(),
            totals.len()
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("correlation needs at least 3 images, got {n}")));
    }
    let mut mean_residual = Vec::with_capacity(n);
    let mut mean_sigma = Vec::with_capacity(n);
    for ((p, g), u) in predictions.iter().zip(ground_truth).zip(totals) {
        if p.shape() != g.shape() || p.shape() != u.shape() {
            return Err(Error::Dimension(format!(
                "prediction {:?}, target {:?} and uncertainty {:?} must match",
                p.shape(),
                g.shape(),
                u.shape()
            )));
        }
        mean_residual.push(p.zip_map(g, |a, b| (a - b).abs())?.mean());
        mean_sigma.push(u.map(f64::sqrt).mean());
    }
    let pearson = pearson(&mean_sigma, &mean_residual)?;
    let spearman = spearman(&mean_sigma, &mean_residual)?;
    Ok(ResidualStats { mean_residual, mean_sigma, pearson, spearman })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(format!("correlation of {} and {} values", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("correlation is undefined for a constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_maps() {
        let ones = Tensor::ones([1, 2, 2]);
        let a = aleatoric_map(&ones, &Tensor::full([1, 2, 2], 2.0)).unwrap();
        assert!(a.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
        let a = aleatoric_map(&ones, &ones).unwrap();
        assert!(a.data().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn total_is_sum() {
        let a = Tensor::from_fn([3], |i| i as f64);
        let m = total_uncertainty(a.clone(), Tensor::zeros([3])).unwrap();
        assert_eq!(m.total, a);
        assert_eq!(m.sigma().data()[1], 1.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn correlation_errors() {
        let t = vec![Tensor::ones([1, 2, 2]); 2];
        assert!(uncertainty_residual_stats(&t, &t, &t).is_err());
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
    }
}
