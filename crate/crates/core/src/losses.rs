//! Training objectives: the uncertainty-aware cycle loss, its L1 special
//! case, and least-squares adversarial terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Weights of the cycle and adversarial terms in the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 10.0, lambda2: 2.0 }
    }
}

impl LossWeights {
    /// λ₂ = 0 is accepted so the cycle term can be optimized on its own.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) || !(self.lambda2 >= 0.0) || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "loss weights must satisfy lambda1 > 0, lambda2 >= 0; got ({}, {})",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

/// One side of the cycle: reconstruction, its predicted scale and shape
/// maps, and the original input it should reproduce.
#[derive(Clone, Copy, Debug)]
pub struct CycleTerms {
    pub recon: Var,
    pub alpha: Var,
    pub beta: Var,
    pub target: Var,
}

fn same_shape(g: &Graph, vars: &[Var], what: &str) -> Result<()> {
    let first = g.shape(vars[0]);
    if let Some(v) = vars.iter().find(|v| g.shape(**v) != first) {
        return Err(Error::Dimension(format!("{what}: shape {:?} vs {first:?}", g.shape(*v))));
    }
    Ok(())
}

/// Mean over every pixel (and batch element) of
/// `(|recon − target| / α)^β − ln(β/α) + ln Γ(1/β)`.
///
/// The exact negative log-likelihood carries an extra `+ ln 2` per pixel; it
/// is constant and omitted. α and β must already be inside their clamps.
pub fn loss_alpha_beta(g: &mut Graph, t: CycleTerms) -> Result<Var> {
    same_shape(g, &[t.recon, t.alpha, t.beta, t.target], "loss_alpha_beta")?;
    let residual = g.sub(t.recon, t.target)?;
    let scaled = g.div(residual, t.alpha)?;
    let power = g.abs_pow(scaled, t.beta)?;
    let ln_beta = g.log(t.beta)?;
    let ln_alpha = g.log(t.alpha)?;
    let inv_beta = g.recip(t.beta)?;
    let ln_gamma = g.log_gamma(inv_beta)?;
    let per_pixel = g.sub(power, ln_beta)?;
    let per_pixel = g.add(per_pixel, ln_alpha)?;
    let per_pixel = g.add(per_pixel, ln_gamma)?;
    Ok(g.mean(per_pixel))
}

/// Uncertainty-aware cycle loss: the GGD likelihood term of each domain, summed.
pub fn loss_ucyc(g: &mut Graph, a: CycleTerms, b: CycleTerms) -> Result<Var> {
    let la = loss_alpha_beta(g, a)?;
    let lb = loss_alpha_beta(g, b)?;
    g.add(la, lb)
}

/// Plain L1 cycle loss, `mean|ā − a| + mean|b̄ − b|`.
pub fn loss_cyc_l1(g: &mut Graph, recon_a: Var, recon_b: Var, a: Var, b: Var) -> Result<Var> {
    same_shape(g, &[recon_a, a], "loss_cyc_l1")?;
    same_shape(g, &[recon_b, b], "loss_cyc_l1")?;
    let mut side = |recon: Var, target: Var| -> Result<Var> {
        let d = g.sub(recon, target)?;
        let d = g.abs(d);
        Ok(g.mean(d))
    };
    let la = side(recon_a, a)?;
    let lb = side(recon_b, b)?;
    g.add(la, lb)
}

/// Mean squared deviation of a patch score map from a constant target map.
pub fn least_squares(g: &mut Graph, scores: Var, target: f64) -> Result<Var> {
    let t = g.constant(Tensor::full(g.shape(scores).to_vec(), target));
    let d = g.sub(scores, t)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}

/// Generator adversarial loss: both translated batches should score as real.
pub fn adv_generator_loss(g: &mut Graph, d_a_of_fake_b: Var, d_b_of_fake_a: Var) -> Result<Var> {
    let la = least_squares(g, d_a_of_fake_b, 1.0)?;
    let lb = least_squares(g, d_b_of_fake_a, 1.0)?;
    g.add(la, lb)
}

/// Discriminator loss: real patches toward 1, generated patches toward 0.
pub fn adv_discriminator_loss(
    g: &mut Graph,
    d_a_real: Var,
    d_a_fake: Var,
    d_b_real: Var,
    d_b_fake: Var,
) -> Result<Var> {
    let terms = [
        least_squares(g, d_a_real, 1.0)?,
        least_squares(g, d_a_fake, 0.0)?,
        least_squares(g, d_b_real, 1.0)?,
        least_squares(g, d_b_fake, 0.0)?,
    ];
    let s = g.add(terms[0], terms[1])?;
    let s = g.add(s, terms[2])?;
    g.add(s, terms[3])
}

/// `λ₁·ucyc + λ₂·adv`.
pub fn total_generator_loss(g: &mut Graph, ucyc: Var, adv: Var, w: LossWeights) -> Result<Var> {
    let c = g.mul_scalar(ucyc, w.lambda1);
    let a = g.mul_scalar(adv, w.lambda2);
    g.add(c, a)
}
