//! Training procedures: vanilla fine-tuning, distillation from a frozen
//! monolingual teacher, teacher pseudo-labeling, and the self-training
//! baseline.

mod distill;
mod gradcheck;
mod loss;
mod pseudo;
mod train;

pub use distill::{build_distill_set, distill, teacher_targets, TeacherTargets};
pub use gradcheck::{model_grad_check, CheckedLoss};
pub use loss::{ce_loss, ce_loss_value, kd_loss, kd_loss_value};
pub use pseudo::{filter_pseudo_labels, generate_pseudo_labels, self_train, train_pseudo_label, PseudoLabel};
pub use train::{accuracy, encode_dataset, fine_tune, predict_labels};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::{ModelError, ModelParams};
use crate::nncore::NnError;

/// Trained models keep 32-bit parameters; gradient checks use 64-bit copies.
pub type Params = ModelParams<f32>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl PipelineError {
    /// True for NaN/Inf failures raised during a forward or update.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            PipelineError::Nn(NnError::NonFinite { .. })
                | PipelineError::Model(ModelError::Nn(NnError::NonFinite { .. }))
        )
    }
}

/// Where the temperature is applied during distillation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdTemperatureMode {
    /// Teacher targets and student logits are both divided by `T`.
    #[default]
    Both,
    /// Only the cached teacher targets are tempered.
    TeacherOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub temperature: f64,
    pub confidence_threshold: f64,
    pub kd_temperature_mode: KdTemperatureMode,
    pub self_train_rounds: usize,
    /// Dev evaluation interval in optimizer steps.
    pub eval_every: usize,
    /// Stop after this many dev evaluations without improvement.
    pub patience: Option<usize>,
    pub freeze_embeddings: bool,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 3,
            max_steps: None,
            seed: 0,
            temperature: 0.1,
            confidence_threshold: 0.0,
            kd_temperature_mode: KdTemperatureMode::Both,
            self_train_rounds: 2,
            eval_every: 100,
            patience: Some(6),
            freeze_embeddings: false,
            eval_batch_size: 64,
        }
    }
}

impl TrainConfig {
    /// Full-size settings: a small learning rate and a fixed step budget.
    pub fn paper() -> Self {
        Self { learning_rate: 5e-6, max_steps: Some(2500), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad(format!("confidence_threshold must be in [0, 1], got {}", self.confidence_threshold));
        }
        if self.self_train_rounds == 0 {
            return bad("self_train_rounds must be >= 1".into());
        }
        if self.eval_every == 0 || self.eval_batch_size == 0 {
            return bad("eval_every and eval_batch_size must be >= 1".into());
        }
        Ok(())
    }
}

/// Dev accuracy measured at one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevPoint {
    pub step: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline: String,
    pub config: TrainConfig,
    pub init_checksum: String,
    /// `(role, fingerprint)` of every dataset the run read.
    pub datasets: Vec<(String, String)>,
    pub dev_curve: Vec<DevPoint>,
    pub best_step: usize,
    pub steps_run: usize,
    /// Teacher forward passes spent building distillation targets.
    pub teacher_forwards: Option<usize>,
    pub teacher_checksum: Option<String>,
    /// Per round of self-training, the pseudo-label count it trained on.
    pub pseudo_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: Params,
    pub provenance: Provenance,
}

impl TrainedModel {
    pub fn best_dev_accuracy(&self) -> Option<f64> {
        self.provenance.dev_curve.iter().find(|p| p.step == self.provenance.best_step).map(|p| p.accuracy)
    }
}
