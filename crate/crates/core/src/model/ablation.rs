//! Toy-scale ablation sweeps over the number of pseudo-time steps or the
//! PDE kind, on the long-range recall task.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::network::Model;
use super::train::{train, OptimizerKind, TrainConfig};
use super::{ModelConfig, Task};
use crate::error::{Error, Result};
use crate::pde::{PdeConfig, PdeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    #[default]
    Steps,
    Kind,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steps" => Ok(AblationAxis::Steps),
            "kind" => Ok(AblationAxis::Kind),
            _ => Err(Error::InvalidConfig(format!("unknown ablation axis `{s}` (steps | kind)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub axis: AblationAxis,
    pub seeds: Vec<u64>,
    pub steps: Vec<usize>,
    pub kinds: Vec<PdeKind>,
    /// Pseudo-time steps used on the kind axis.
    pub kind_steps: usize,
    pub n_samples: usize,
    pub seq_len: usize,
    pub n_keys: usize,
    pub n_distractors: usize,
    pub val_fraction: f64,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_hidden: usize,
    pub alpha: f64,
    pub train: TrainConfig,
    /// Step count that runs with the instability settings below; `None`
    /// keeps every cell stable.
    pub unstable_steps: Option<usize>,
    /// Diffusivity forced on the unstable cell, with the guard off.
    pub unstable_alpha: f64,
    /// A run converges when its loss reduction reaches this fraction.
    pub convergence_threshold: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            axis: AblationAxis::Steps,
            seeds: vec![0, 1, 2],
            steps: vec![0, 1, 2, 4, 8],
            kinds: PdeKind::ALL.to_vec(),
            kind_steps: 2,
            n_samples: 160,
            seq_len: 128,
            n_keys: 4,
            n_distractors: 12,
            val_fraction: 0.2,
            n_layers: 2,
            n_heads: 2,
            d_model: 32,
            d_hidden: 64,
            alpha: 0.1,
            train: TrainConfig {
                epochs: 30,
                optimizer: OptimizerKind::Adam,
                lr: 3e-3,
                patience: 0,
                ..Default::default()
            },
            unstable_steps: Some(8),
            unstable_alpha: 3.0,
            convergence_threshold: 0.5,
        }
    }
}

/// One (setting, seed) pair of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: PdeKind,
    pub n_steps: usize,
    pub seed: u64,
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub spec: CellSpec,
    pub initial_loss: f64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub final_accuracy: f64,
    pub loss_reduction: f64,
    pub converged: bool,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
    pub epochs_run: usize,
    /// Wall-clock time; kept out of the CSV so reruns are byte-identical.
    pub seconds: f64,
}

pub const ABLATION_CSV_HEADER: &str =
    "axis,kind,n_steps,seed,unstable,initial_loss,final_train_loss,final_val_loss,final_accuracy,loss_reduction,converged,diverged,epochs_run";

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("ablation needs at least one seed".into()));
        }
        if self.axis == AblationAxis::Steps && self.steps.is_empty() {
            return Err(Error::InvalidConfig("steps axis needs at least one step count".into()));
        }
        if self.axis == AblationAxis::Kind && self.kinds.is_empty() {
            return Err(Error::InvalidConfig("kind axis needs at least one PDE kind".into()));
        }
        self.train.validate()?;
        self.model_config(self.cells()[0])?.validate()
    }

    /// Every cell of the sweep, setting-major and seed-minor.
    pub fn cells(&self) -> Vec<CellSpec> {
        let settings: Vec<(PdeKind, usize)> = match self.axis {
            AblationAxis::Steps => self.steps.iter().map(|&n| (PdeKind::Diffusion, n)).collect(),
            AblationAxis::Kind => self.kinds.iter().map(|&k| (k, self.kind_steps)).collect(),
        };
        settings
            .into_iter()
            .flat_map(|(kind, n_steps)| {
                let unstable = self.axis == AblationAxis::Steps && self.unstable_steps == Some(n_steps);
                self.seeds.iter().map(move |&seed| CellSpec {
                    kind,
                    n_steps,
                    seed,
                    unstable,
                })
            })
            .collect()
    }

    pub fn model_config(&self, cell: CellSpec) -> Result<ModelConfig> {
        let mut pde = if cell.kind == PdeKind::Diffusion {
            PdeConfig::diffusion(self.alpha, 1.0, cell.n_steps)
        } else {
            PdeConfig::reference(cell.kind, cell.n_steps)
        };
        pde.renormalize_rows = true;
        if cell.unstable {
            pde.alpha = self.unstable_alpha;
            pde.stability_guard = false;
        }
        let cfg = ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_hidden: self.d_hidden,
            vocab_size: self.n_keys + self.n_distractors,
            max_seq_len: self.seq_len,
            n_classes: self.n_keys,
            task: Task::Classification,
            pde,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Train one cell. The seed drives the dataset, the initial weights
    /// and the shuffles.
    pub fn run_cell(&self, cell: CellSpec) -> Result<AblationCell> {
        let cfg = self.model_config(cell)?;
        let data = Dataset::long_range_recall(
            self.n_samples,
            self.seq_len,
            self.n_keys,
            self.n_distractors,
            cell.seed,
        )?;
        let (tr, va) = data.split(self.val_fraction, cell.seed)?;
        let mut model = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(cell.seed))?;
        let tc = TrainConfig {
            seed: cell.seed,
            ..self.train.clone()
        };
        let start = Instant::now();
        let rec = train(&mut model, &tr, &va, &tc)?;
        let seconds = start.elapsed().as_secs_f64();
        let last = rec
            .epochs
            .iter()
            .rev()
            .find(|e| !e.diverged)
            .or(rec.last())
            .ok_or_else(|| Error::InvalidInput("training produced no epochs".into()))?;
        let reduction = rec.loss_reduction();
        Ok(AblationCell {
            spec: cell,
            initial_loss: rec.initial_train_loss(),
            final_train_loss: last.train_loss,
            final_val_loss: last.val_loss,
            final_accuracy: last.metric,
            loss_reduction: reduction,
            converged: !rec.diverged && reduction >= self.convergence_threshold,
            diverged: rec.diverged,
            divergence_reason: rec.divergence_reason.clone(),
            epochs_run: rec.epochs.iter().filter(|e| !e.diverged).count().saturating_sub(1),
            seconds,
        })
    }

    pub fn write_csv<W: Write>(&self, cells: &[AblationCell], mut w: W) -> Result<()> {
        writeln!(w, "{ABLATION_CSV_HEADER}")?;
        let axis = match self.axis {
            AblationAxis::Steps => "steps",
            AblationAxis::Kind => "kind",
        };
        for c in cells {
            writeln!(
                w,
                "{axis},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.spec.kind.name(),
                c.spec.n_steps,
                c.spec.seed,
                c.spec.unstable,
                c.initial_loss,
                c.final_train_loss,
                c.final_val_loss,
                c.final_accuracy,
                c.loss_reduction,
                c.converged,
                c.diverged,
                c.epochs_run
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_axis_marks_only_the_unstable_setting() {
        let cfg = AblationConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 15);
        assert!(cells.iter().all(|c| c.unstable == (c.n_steps == 8)));
        let unstable = cfg.model_config(cells[14]).unwrap();
        assert!(!unstable.pde.stability_guard);
        assert_eq!(unstable.pde.alpha, 3.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn kind_axis_covers_every_kind() {
        let cfg = AblationConfig {
            axis: AblationAxis::Kind,
            seeds: vec![4],
            ..Default::default()
        };
        let kinds: Vec<PdeKind> = cfg.cells().iter().map(|c| c.kind).collect();
        assert_eq!(kinds, PdeKind::ALL.to_vec());
        assert!(cfg.cells().iter().all(|c| !c.unstable && c.n_steps == 2));
    }

    #[test]
    fn tiny_cell_runs_and_serializes() {
        let cfg = AblationConfig {
            seeds: vec![0],
            steps: vec![1],
            n_samples: 10,
            seq_len: 8,
            d_model: 4,
            d_hidden: 4,
            n_layers: 1,
            train: TrainConfig {
                epochs: 2,
                ..AblationConfig::default().train
            },
            ..Default::default()
        };
        let cell = cfg.run_cell(cfg.cells()[0]).unwrap();
        assert_eq!(cell.epochs_run, 2);
        let mut out = Vec::new();
        cfg.write_csv(&[cell], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(ABLATION_CSV_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("steps,diffusion,1,0,false,"));
    }
}
