//! Generator and discriminator architectures.
//!
//! Networks own their parameters in a [`ParamStore`]. A forward pass first
//! binds the store onto a [`Graph`] (as trainable or frozen leaves) and then
//! threads [`Var`]s through the layers.

mod blocks;
pub mod checkpoint;
mod discriminator;
mod generator;

pub use blocks::{Conv, ConvNormAct, Down, InstanceNorm, OutConv, ResConv, Up};
pub use checkpoint::Checkpoint;
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{
    to_ggd_params, GgdMaps, Generator, GeneratorConfig, Prediction, ThreeHeadOutput, UNet, UNet3Head, ALPHA_EPS,
    BETA_FLOOR,
};

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::ops::Index;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};
use crate::Rng;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    NormGain,
    NormBias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    kinds: Vec<ParamKind>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.kinds.push(kind);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Conv weights ~ N(0, 0.02²); conv biases 0; norm gains 1, norm biases 0.
    pub fn init_weights(&mut self, rng: &mut Rng) {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (value, kind) in self.values.iter_mut().zip(&self.kinds) {
            match kind {
                ParamKind::ConvWeight => value.data_mut().iter_mut().for_each(|v| *v = normal.sample(rng)),
                ParamKind::ConvBias | ParamKind::NormBias => value.data_mut().fill(0.0),
                ParamKind::NormGain => value.data_mut().fill(1.0),
            }
        }
    }

    /// Register every parameter on `g`. Frozen bindings still pass gradients
    /// through to upstream inputs but record none for the parameters.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound { vars: self.values.iter().map(|t| g.leaf(t.clone(), trainable)).collect() }
    }

    /// Hash of every parameter bit pattern, for detecting mutation.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, v) in self.names.iter().zip(&self.values) {
            name.hash(&mut h);
            v.shape().hash(&mut h);
            v.data().iter().for_each(|x| x.to_bits().hash(&mut h));
        }
        h.finish()
    }

    pub fn export(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.names.iter().zip(&self.values).map(|(n, v)| (format!("{prefix}{n}"), v.clone())).collect()
    }

    /// Overwrite every parameter from `tensors`, matching on prefixed names and shapes.
    pub fn import(&mut self, prefix: &str, tensors: &HashMap<String, Tensor>) -> Result<()> {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let key = format!("{prefix}{name}");
            let t = tensors.get(&key).ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {key}")))?;
            if t.shape() != value.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {key}: checkpoint shape {:?}, network expects {:?}",
                    t.shape(),
                    value.shape()
                )));
            }
            *value = t.clone();
        }
        Ok(())
    }
}

/// Parameters of one network as graph variables, indexed by [`ParamId`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

pub(crate) fn maybe_dropout(g: &mut Graph, x: Var, p: f64, rng: Option<&mut Rng>) -> Result<Var> {
    match rng {
        Some(rng) => g.dropout(x, p, true, rng),
        None => Ok(x),
    }
}
