//! Test-time input corruptions and their four-level severity schedules.
//!
//! Outputs are not clipped back into `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Additive N(0, σ²).
    Gaussian,
    /// Additive U[0, κ].
    Uniform,
    /// Each pixel replaced with probability p by a uniform random colour.
    Impulse,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::Uniform, Family::Impulse];

    /// Parameter values for NL0..NL3.
    pub fn levels(self) -> [f64; 4] {
        match self {
            Family::Gaussian => [0.0, 0.10, 0.20, 0.30],
            Family::Uniform => [0.0, 0.20, 0.40, 0.60],
            Family::Impulse => [0.0, 0.15, 0.30, 0.45],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Uniform => "uniform",
            Family::Impulse => "impulse",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "uniform" => Ok(Family::Uniform),
            "impulse" => Ok(Family::Impulse),
            _ => Err(Error::InvalidArgument(format!("unknown noise family {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub family: Family,
    /// Severity index 0..=3.
    pub level: usize,
    /// σ, κ or p depending on the family.
    pub parameter: f64,
}

impl PerturbSpec {
    pub fn new(family: Family, level: usize) -> Result<Self> {
        let parameter = *family
            .levels()
            .get(level)
            .ok_or_else(|| Error::InvalidArgument(format!("noise level NL{level} does not exist (NL0..NL3)")))?;
        Ok(Self { family, level, parameter })
    }

    pub fn apply(&self, x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        perturb(x, self.family, self.parameter, rng)
    }
}

/// The NL0..NL3 specs of one family.
pub fn level_schedule(family: Family) -> [PerturbSpec; 4] {
    let p = family.levels();
    std::array::from_fn(|level| PerturbSpec { family, level, parameter: p[level] })
}

/// Parse `NL2`, `nl2` or `2`.
pub fn parse_level(s: &str) -> Result<usize> {
    let digits = s.strip_prefix("NL").or_else(|| s.strip_prefix("nl")).unwrap_or(s);
    match digits.parse::<usize>() {
        Ok(l) if l <= 3 => Ok(l),
        _ => Err(Error::InvalidArgument(format!("noise level {s:?} is not one of NL0..NL3"))),
    }
}

pub fn perturb(x: &Tensor, family: Family, parameter: f64, rng: &mut Rng) -> Result<Tensor> {
    match family {
        Family::Gaussian => perturb_gaussian(x, parameter, rng),
        Family::Uniform => perturb_uniform(x, parameter, rng),
        Family::Impulse => perturb_impulse(x, parameter, rng),
    }
}

pub fn perturb_gaussian(x: &Tensor, sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("gaussian sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(x.map_with(|v| v + normal.sample(rng)))
}

pub fn perturb_uniform(x: &Tensor, kappa: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("uniform kappa must be >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(x.clone());
    }
    Ok(x.map_with(|v| v + kappa * rng.random::<f64>()))
}

/// `x` is `[C, H, W]` or `[N, C, H, W]`; one mask per spatial location is
/// shared by all channels.
pub fn perturb_impulse(x: &Tensor, p: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("impulse probability must lie in [0, 1), got {p}")));
    }
    if p == 0.0 {
        return Ok(x.clone());
    }
    let (n, c, hw) = match *x.shape() {
        [c, h, w] => (1, c, h * w),
        [n, c, h, w] => (n, c, h * w),
        _ => return Err(Error::Dimension(format!("impulse noise needs an image tensor, got {:?}", x.shape()))),
    };
    let mut out = x.clone();
    let d = out.data_mut();
    for img in 0..n {
        for px in 0..hw {
            if rng.random::<f64>() < p {
                for ch in 0..c {
                    d[(img * c + ch) * hw + px] = rng.random::<f64>();
                }
            }
        }
    }
    Ok(out)
}

trait MapWith {
    fn map_with(&self, f: impl FnMut(f64) -> f64) -> Tensor;
}

impl MapWith for Tensor {
    fn map_with(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        let mut out = self.clone();
        out.data_mut().iter_mut().for_each(|v| *v = f(*v));
        out
    }
}
