//! Generalized Gaussian distribution: special functions, density, the
//! per-pixel likelihood kernel used by the cycle loss, a sampler, and the
//! closed-form variance.
//!
//! The density with location μ, scale α and shape β is
//!
//! ```text
//! p(x) = β / (2 α Γ(1/β)) · exp(−(|x − μ| / α)^β)
//! ```
//!
//! β = 1 is the Laplace distribution, β = 2 a Gaussian with variance α²/2.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 1e-3;
pub const BETA_MIN: f64 = 1e-2;
pub const BETA_MAX: f64 = 10.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine coefficients; reflection below ½).
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma undefined at {x}")));
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x < 0.5 {
        // Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma_positive(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`: upward recurrence to x ≥ 10,
/// then the asymptotic series. NaN outside the domain.
pub fn digamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let f = 1.0 / (x * x);
    let series = f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
    acc + x.ln() - 0.5 / x - series
}

/// Location, scale and shape of a generalized Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgdParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GgdParams {
    pub fn new(mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { mu, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    /// Force α and β into the admissible ranges.
    pub fn clamped(mu: f64, alpha: f64, beta: f64) -> Self {
        Self { mu, alpha: alpha.max(ALPHA_MIN), beta: beta.clamp(BETA_MIN, BETA_MAX) }
    }

    pub fn validate(&self) -> Result<()> {
        check_scale_shape(self.alpha, self.beta)?;
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("non-finite location {}", self.mu)));
        }
        Ok(())
    }
}

fn check_scale_shape(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= ALPHA_MIN) || !alpha.is_finite() {
        return Err(Error::Domain(format!("scale {alpha} below {ALPHA_MIN} or non-finite")));
    }
    if !(BETA_MIN..=BETA_MAX).contains(&beta) {
        return Err(Error::Domain(format!("shape {beta} outside [{BETA_MIN}, {BETA_MAX}]")));
    }
    Ok(())
}

pub fn ggd_pdf(x: f64, p: &GgdParams) -> Result<f64> {
    p.validate()?;
    let z = (x - p.mu).abs() / p.alpha;
    let log_norm = p.beta.ln() - std::f64::consts::LN_2 - p.alpha.ln() - ln_gamma_positive(1.0 / p.beta);
    Ok((log_norm - z.powf(p.beta)).exp())
}

/// Per-pixel cycle-loss kernel `(|r|/α)^β − ln(β/α) + ln Γ(1/β)`.
///
/// This is the exact GGD negative log-likelihood of the residual minus the
/// constant `ln 2`, which does not affect gradients and is left out.
pub fn nll_pixel(residual: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_scale_shape(alpha, beta)?;
    Ok((residual.abs() / alpha).powf(beta) - (beta / alpha).ln() + ln_gamma_positive(1.0 / beta))
}

/// Draws `X = μ + s·α·G^{1/β}` with `G ~ Gamma(1/β, 1)` and a fair random sign `s`.
pub fn ggd_sample<R: Rng + ?Sized>(p: &GgdParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    p.validate()?;
    let gamma = Gamma::new(1.0 / p.beta, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let mag = p.alpha * gamma.sample(rng).powf(1.0 / p.beta);
            if rng.random::<bool>() {
                p.mu + mag
            } else {
                p.mu - mag
            }
        })
        .collect())
}

/// Closed-form variance `α² Γ(3/β) / Γ(1/β)`.
pub fn aleatoric_variance(alpha: f64, beta: f64) -> Result<f64> {
    check_scale_shape(alpha, beta)?;
    Ok(alpha * alpha * (ln_gamma_positive(3.0 / beta) - ln_gamma_positive(1.0 / beta)).exp())
}
