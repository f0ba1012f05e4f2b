//! Post-norm encoder classifier shared by teacher and student, the tied
//! multilingual embedding, tokenization, and checkpoint persistence.

mod checkpoint;
mod forward;
mod params;
mod vocab;

pub use checkpoint::{
    from_bytes, load_checkpoint, load_checkpoint_as, save_checkpoint, to_bytes, CheckpointError, MAGIC,
};
pub use forward::{forward, predict_logits, BindMode, Forward};
pub use params::{
    init_student, init_teacher, Embedding, EncoderLayer, ModelParams, Norm, TensorKind, TiedEmbedding, INIT_STD,
};
pub use vocab::{encode, Encoded, EncodedBatch, Vocab, CLS, MIN_SEQ_LEN, PAD, SEP, SPECIAL_TOKENS, UNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nncore::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    /// Filled in from the vocabulary at initialization.
    #[serde(default)]
    pub vocab_size: usize,
    pub num_classes: usize,
    pub role: Role,
}

/// Desk sequence length; the full-size preset uses 256.
pub const DESK_MAX_SEQ_LEN: usize = 32;
pub const PAPER_MAX_SEQ_LEN: usize = 256;

impl ModelConfig {
    pub fn teacher_preset(num_classes: usize) -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 128,
            num_heads: 4,
            ffn_dim: 256,
            max_seq_len: DESK_MAX_SEQ_LEN,
            vocab_size: 0,
            num_classes,
            role: Role::Teacher,
        }
    }

    pub fn student_preset(num_classes: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 128,
            max_seq_len: DESK_MAX_SEQ_LEN,
            vocab_size: 0,
            num_classes,
            role: Role::Student,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad(format!("hidden_dim {} is not divisible by num_heads {}", self.hidden_dim, self.num_heads));
        }
        if self.max_seq_len < MIN_SEQ_LEN {
            return bad(format!("max_seq_len must be >= {MIN_SEQ_LEN}, got {}", self.max_seq_len));
        }
        if self.num_layers == 0 || self.ffn_dim == 0 {
            return bad("num_layers and ffn_dim must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        Ok(())
    }
}
