//! Per-object implicit model: a multi-resolution hash encoding feeding a
//! small ReLU network that outputs density and color. Forward and backward
//! passes are written out by hand; training uses a sparse-aware Adam.

mod adam;
mod checkpoint;
mod encoding;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use encoding::{HashEncoding, LevelInfo, CORNER_COUNT};
pub use model::{ForwardCache, Gradients, HashGridModel, OutputGrad, PointEval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityActivation {
    Softplus,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorActivation {
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub levels: usize,
    pub features_per_level: usize,
    /// log2 of the hash table size T.
    pub table_size_log2: u32,
    /// Coarsest grid resolution N_min.
    pub base_resolution: u32,
    /// Finest grid resolution N_max.
    pub finest_resolution: u32,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub density_activation: DensityActivation,
    pub color_activation: ColorActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            features_per_level: 2,
            table_size_log2: 16,
            base_resolution: 16,
            finest_resolution: 2048,
            hidden_width: 64,
            hidden_layers: 1,
            density_activation: DensityActivation::Softplus,
            color_activation: ColorActivation::Sigmoid,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::Config("levels must be >= 1".into()));
        }
        if self.features_per_level < 1 || self.hidden_width < 1 {
            return Err(Error::Config("feature and hidden widths must be >= 1".into()));
        }
        if self.hidden_layers < 1 {
            return Err(Error::Config("hidden_layers must be >= 1".into()));
        }
        if self.base_resolution < 1 || self.finest_resolution < self.base_resolution {
            return Err(Error::Config("need finest_resolution >= base_resolution >= 1".into()));
        }
        if !(1..=28).contains(&self.table_size_log2) {
            return Err(Error::Config("table_size_log2 must be in 1..=28".into()));
        }
        Ok(())
    }

    pub fn encoded_width(&self) -> usize {
        self.levels * self.features_per_level
    }

    /// Per-level growth factor `exp(ln(N_max / N_min) / (L - 1))`.
    pub fn growth_factor(&self) -> f64 {
        if self.levels == 1 {
            1.0
        } else {
            (((self.finest_resolution as f64).ln() - (self.base_resolution as f64).ln())
                / (self.levels - 1) as f64)
                .exp()
        }
    }

    pub fn level_resolutions(&self) -> Vec<u32> {
        let b = self.growth_factor();
        (0..self.levels)
            .map(|l| (self.base_resolution as f64 * b.powi(l as i32) + 1e-9).floor() as u32)
            .collect()
    }
}

/// Anything that can report density at normalized object coordinates.
pub trait DensityField {
    fn densities(&self, normalized: &[Vec3]) -> Vec<f64>;
}

/// Adapts a closure into a [`DensityField`].
pub struct FnField<F>(pub F);

impl<F: Fn(&Vec3) -> f64> DensityField for FnField<F> {
    fn densities(&self, normalized: &[Vec3]) -> Vec<f64> {
        normalized.iter().map(&self.0).collect()
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
