//! Training with early stopping, evaluation under the test schemes, repeated
//! runs with median aggregation, and report files.

mod evaluate;
mod report;
mod runner;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{ClipBounds, DEFAULT_HINGE_MARGIN};
use crate::nn::{AdamConfig, ModelConfig};

pub use evaluate::{embed_dataset, evaluate, write_embedding_csv, EmbeddingRow, EvalReport, SchemeResult};
pub use report::{median, quantile, write_history_csv, write_violations_csv, MedianIqr, Summary};
pub use runner::{run_experiment, ExperimentConfig, ExperimentResult, RunOutcome, RunRecord};
pub use train::{initial_params, train, train_with_validator, EarlyStopping, EpochRecord, RunResult, StopDecision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SamplerKind {
    /// Uniform over all image triples, ordered by the score oracle.
    Uniform,
    /// Same-score near image, far image weighted by score distance.
    Extent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    Clipped { lower: f64, upper: f64 },
    Hinge { margin: f64 },
}

impl LossKind {
    pub fn hinge_default() -> Self {
        LossKind::Hinge {
            margin: DEFAULT_HINGE_MARGIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Clipped { lower, upper } => ClipBounds::new(lower, upper).map(|_| ()),
            LossKind::Hinge { margin } if margin >= 0.0 && margin.is_finite() => Ok(()),
            LossKind::Hinge { margin } => Err(Error::config(format!("invalid hinge margin {margin}"))),
        }
    }
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::Clipped {
            lower: ClipBounds::DEFAULT.lower(),
            upper: ClipBounds::DEFAULT.upper(),
        }
    }
}

/// One training run. Epochs draw a fresh set of `triplets_per_epoch` training
/// triplets; each gradient step averages over `batch_size` triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default = "defaults::triplets_per_epoch")]
    pub triplets_per_epoch: usize,
    /// Size of the fixed validation triplet set used for model selection.
    #[serde(default = "defaults::validation_triplets")]
    pub validation_triplets: usize,
    #[serde(default = "defaults::sampler")]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
}

pub(crate) mod defaults {
    use super::SamplerKind;

    pub fn batch_size() -> usize {
        15
    }
    pub fn max_epochs() -> usize {
        100
    }
    pub fn patience() -> usize {
        10
    }
    pub fn triplets_per_epoch() -> usize {
        500
    }
    pub fn validation_triplets() -> usize {
        2000
    }
    pub fn sampler() -> SamplerKind {
        SamplerKind::Extent
    }
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            batch_size: defaults::batch_size(),
            max_epochs: defaults::max_epochs(),
            patience: defaults::patience(),
            triplets_per_epoch: defaults::triplets_per_epoch(),
            validation_triplets: defaults::validation_triplets(),
            sampler: defaults::sampler(),
            loss: LossKind::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.adam.validate()?;
        let counts = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("triplets_per_epoch", self.triplets_per_epoch),
            ("validation_triplets", self.validation_triplets),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.patience > self.max_epochs {
            return Err(Error::config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}
