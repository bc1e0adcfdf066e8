//! A small post-LN transformer built on PDE attention, with synthetic
//! datasets, a deterministic training loop and JSON checkpoints.

mod ablation;
mod data;
mod layers;
mod network;
mod train;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionMask;
use crate::error::{Error, Result};
use crate::hybrid::SparsePattern;
use crate::pde::PdeConfig;

pub use ablation::{AblationAxis, AblationCell, AblationConfig, CellSpec, ABLATION_CSV_HEADER};
pub use data::{CharVocab, Dataset, DatasetKind, Sample};
pub use network::{LayerParams, Logits, Model, ModelParams};
pub use train::{
    load_checkpoint, save_checkpoint, train, Checkpoint, EpochRecord, OptimizerKind, TrainConfig,
    TrainRecord, CHECKPOINT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    CausalLm,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// Softmax attention; the PDE stage is skipped.
    Standard,
    #[default]
    Pde,
    /// Sliding-window plus global-token initialisation, then PDE refinement.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_hidden: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    /// Output classes for the classification task.
    pub n_classes: usize,
    pub task: Task,
    pub attention_variant: AttentionVariant,
    pub pde: PdeConfig,
    /// Train the per-head PDE coefficients along with the weights.
    pub learn_coefficients: bool,
    pub layer_norm_eps: f64,
    /// Hybrid variant only.
    pub window: usize,
    pub global_tokens: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 32,
            d_hidden: 64,
            vocab_size: 16,
            max_seq_len: 32,
            n_classes: 2,
            task: Task::CausalLm,
            attention_variant: AttentionVariant::Pde,
            pde: PdeConfig {
                renormalize_rows: true,
                ..PdeConfig::default()
            },
            learn_coefficients: true,
            layer_norm_eps: 1e-5,
            window: 8,
            global_tokens: vec![0],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_layers == 0 {
            return bad("n_layers must be at least 1".into());
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "n_heads = {} must divide d_model = {}",
                self.n_heads, self.d_model
            ));
        }
        if self.d_hidden == 0 || self.vocab_size == 0 {
            return bad("d_hidden and vocab_size must be positive".into());
        }
        if self.max_seq_len < 2 {
            return bad(format!("max_seq_len must be >= 2, got {}", self.max_seq_len));
        }
        if self.task == Task::Classification && self.n_classes < 2 {
            return bad("classification needs at least 2 classes".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive".into());
        }
        if self.attention_variant == AttentionVariant::Hybrid {
            if self.task == Task::CausalLm {
                return bad("the hybrid variant is only supported for classification".into());
            }
            self.pattern().validate(self.max_seq_len)?;
        }
        self.attention_pde().validate()
    }

    /// The PDE stage as actually run; the standard variant takes no steps.
    pub fn attention_pde(&self) -> PdeConfig {
        let mut cfg = self.pde.clone();
        if self.attention_variant == AttentionVariant::Standard {
            cfg.n_steps = 0;
        }
        cfg
    }

    pub fn pattern(&self) -> SparsePattern {
        SparsePattern::new(self.window, self.global_tokens.iter().copied())
    }

    pub fn mask(&self) -> AttentionMask {
        match (self.attention_variant, self.task) {
            (AttentionVariant::Hybrid, _) => AttentionMask::Sparse(self.pattern()),
            (_, Task::CausalLm) => AttentionMask::Causal,
            (_, Task::Classification) => AttentionMask::Dense,
        }
    }

    /// Width of the output layer.
    pub fn n_outputs(&self) -> usize {
        match self.task {
            Task::CausalLm => self.vocab_size,
            Task::Classification => self.n_classes,
        }
    }
}
