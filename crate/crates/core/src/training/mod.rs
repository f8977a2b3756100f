//! Contrastive-divergence training for every model kind and the grid-search harness.

mod gradient;
mod grid;
mod optimizer;
mod report;
mod trainer;

pub use gradient::{
    cd_step_fusion, cd_step_layer, layer_statistics, sample_categorical_batch, CdOutcome, FusionBatch,
    GradientSet, LayerBatch, LayerGradient,
};
pub use grid::{grid_search, GridCell, GridConfig, GridPoint, GridResult};
pub use optimizer::apply_update;
pub use report::{EpochReport, TrainReport};
pub use trainer::train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub cd_steps: usize,
    pub seed: u64,
    /// Fit the standardization on the training data and store it in the model.
    /// When off, the model's stored standardization is applied as is.
    pub auto_standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 2e-4,
            epochs: 30,
            minibatch_size: 100,
            cd_steps: 1,
            seed: 0,
            auto_standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be positive");
        }
        if self.cd_steps == 0 {
            return bad("cd_steps must be positive");
        }
        Ok(())
    }
}
