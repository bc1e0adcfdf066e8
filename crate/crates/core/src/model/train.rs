use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::network::Model;
use super::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// SGD momentum.
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Stop after this many epochs without a validation improvement; 0
    /// disables early stopping.
    pub patience: usize,
    /// Seed for the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 0.05,
            optimizer: OptimizerKind::Sgd,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Adam at the desk-scaled learning rate.
    pub fn adam() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidConfig(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return Err(Error::InvalidConfig("momentum and Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Epoch 0 evaluates the initial weights before any update.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation perplexity (language modelling) or accuracy.
    pub metric: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    /// Mean gradient norm per parameter group: embeddings, each layer,
    /// output head.
    pub group_grad_norms: Vec<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
    pub stopped_early: bool,
}

impl TrainRecord {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,metric,grad_norm_mean,grad_norm_max,diverged")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.metric, e.grad_norm_mean, e.grad_norm_max, e.diverged
            )?;
        }
        Ok(())
    }

    pub fn initial_train_loss(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.train_loss)
    }

    /// `1 - min_epoch train_loss / initial train_loss`.
    pub fn loss_reduction(&self) -> f64 {
        let best = self
            .epochs
            .iter()
            .map(|e| e.train_loss)
            .filter(|l| l.is_finite())
            .fold(f64::INFINITY, f64::min);
        1.0 - best / self.initial_train_loss()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Errors that mean the numbers blew up rather than that the input was bad.
fn is_breakdown(e: &Error) -> bool {
    match e {
        Error::Divergence { .. } | Error::DegenerateField { .. } => true,
        Error::AtStep { source, .. } => is_breakdown(source),
        _ => false,
    }
}

enum Optimizer {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Optimizer {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd {
                velocity: vec![0.0; n],
            },
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        match self {
            Optimizer::Sgd { velocity } => {
                for ((p, g), vel) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *vel = cfg.momentum * *vel + g;
                    *p -= cfg.lr * *vel;
                }
            }
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
                let c1 = 1.0 - b1.powi(*t);
                let c2 = 1.0 - b2.powi(*t);
                for (((p, g), mi), vi) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = b1 * *mi + (1.0 - b1) * g;
                    *vi = b2 * *vi + (1.0 - b2) * g * g;
                    *p -= cfg.lr * (*mi / c1) / ((*vi / c2).sqrt() + cfg.adam_eps);
                }
            }
        }
    }
}

struct Evaluation {
    loss: f64,
    metric: f64,
}

fn evaluate(model: &Model, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Ok(Evaluation {
            loss: f64::NAN,
            metric: f64::NAN,
        });
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in &data.samples {
        let (l, predicted) = model.loss_and_prediction(s)?;
        loss += l;
        if predicted.is_some() && predicted == s.label {
            correct += 1;
        }
    }
    let loss = loss / data.len() as f64;
    let metric = match model.config.task {
        Task::CausalLm => loss.exp(),
        Task::Classification => correct as f64 / data.len() as f64,
    };
    Ok(Evaluation { loss, metric })
}

fn check_dataset(model: &Model, data: &Dataset) -> Result<()> {
    if data.vocab_size > model.config.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "dataset vocabulary {} exceeds model vocabulary {}",
            data.vocab_size, model.config.vocab_size
        )));
    }
    if data.max_len() > model.config.max_seq_len {
        return Err(Error::InvalidConfig(format!(
            "dataset sequences of length {} exceed max_seq_len {}",
            data.max_len(),
            model.config.max_seq_len
        )));
    }
    match (model.config.task, data.n_classes) {
        (Task::Classification, Some(c)) if c <= model.config.n_classes => Ok(()),
        (Task::CausalLm, None) => Ok(()),
        _ => Err(Error::InvalidConfig(format!(
            "{:?} dataset does not fit a {:?} model",
            data.kind, model.config.task
        ))),
    }
}

/// Mini-batch training. Samples are visited in a seeded shuffle and
/// gradients are summed in that order, so runs are reproducible bit for bit.
/// A non-finite loss or gradient, or a field that blows up inside the PDE
/// stage, ends training with the divergence flag set.
pub fn train(model: &mut Model, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<TrainRecord> {
    cfg.validate()?;
    model.config.validate()?;
    check_dataset(model, train_set)?;
    check_dataset(model, val_set)?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }

    let mut record = TrainRecord {
        epochs: Vec::new(),
        diverged: false,
        divergence_reason: None,
        stopped_early: false,
    };
    let diverge = |record: &mut TrainRecord, epoch: usize, reason: String| {
        record.diverged = true;
        record.divergence_reason = Some(reason);
        record.epochs.push(EpochRecord {
            epoch,
            train_loss: f64::NAN,
            val_loss: f64::NAN,
            metric: f64::NAN,
            grad_norm_mean: f64::NAN,
            grad_norm_max: f64::NAN,
            group_grad_norms: Vec::new(),
            diverged: true,
        });
    };

    let init_train = match evaluate(model, train_set) {
        Ok(e) => e,
        Err(e) if is_breakdown(&e) => {
            diverge(&mut record, 0, e.to_string());
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    let init_val = evaluate(model, val_set)?;
    record.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: init_train.loss,
        val_loss: init_val.loss,
        metric: init_val.metric,
        grad_norm_mean: 0.0,
        grad_norm_max: 0.0,
        group_grad_norms: Vec::new(),
        diverged: false,
    });

    let n_params = model.params.len();
    let mut opt = Optimizer::new(cfg.optimizer, n_params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_val = init_val.loss;
    let mut since_best = 0usize;
    let pde = model.config.attention_pde();

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut norms = Vec::new();
        let mut group_sums: Vec<f64> = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for &i in batch {
                let (loss, g) = match model.loss_and_grad(&train_set.samples[i]) {
                    Ok(v) => v,
                    Err(e) if is_breakdown(&e) => {
                        diverge(&mut record, epoch, e.to_string());
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += loss;
                let mut at = 0;
                g.visit(&mut |s| {
                    for (acc, x) in grad[at..at + s.len()].iter_mut().zip(s) {
                        *acc += x;
                    }
                    at += s.len();
                });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !batch_loss.is_finite() || !norm.is_finite() {
                diverge(&mut record, epoch, format!("non-finite loss or gradient (loss {batch_loss}, norm {norm})"));
                break 'epochs;
            }
            loss_sum += batch_loss;
            norms.push(norm);
            let mut gp = model.params.zeros_like();
            gp.assign(&grad)?;
            let groups = gp.group_norms();
            group_sums.resize(groups.len(), 0.0);
            group_sums.iter_mut().zip(&groups).for_each(|(s, g)| *s += g);

            let mut flat = model.params.flatten();
            opt.step(&mut flat, &grad, cfg);
            model.params.assign(&flat)?;
            for layer in &mut model.params.layers {
                if pde.stability_guard {
                    layer.attn.clamp_coefficients(&pde);
                } else {
                    // diffusivity and wave speed stay physical even unguarded
                    for k in &mut layer.attn.coeffs {
                        k.alpha = k.alpha.max(0.0);
                        k.c = k.c.max(0.0);
                    }
                }
            }
        }

        let val = match evaluate(model, val_set) {
            Ok(v) => v,
            Err(e) if is_breakdown(&e) => {
                diverge(&mut record, epoch, e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let train_loss = loss_sum / train_set.len() as f64;
        let n_batches = norms.len() as f64;
        record.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val.loss,
            metric: val.metric,
            grad_norm_mean: norms.iter().sum::<f64>() / n_batches,
            grad_norm_max: norms.iter().copied().fold(0.0, f64::max),
            group_grad_norms: group_sums.iter().map(|s| s / n_batches).collect(),
            diverged: false,
        });
        if !train_loss.is_finite() || (!val_set.is_empty() && !val.loss.is_finite()) {
            let last = record.epochs.last_mut().expect("just pushed");
            last.diverged = true;
            record.diverged = true;
            record.divergence_reason = Some("non-finite epoch loss".into());
            break;
        }
        if val.loss < best_val {
            best_val = val.loss;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                record.stopped_early = true;
                break;
            }
        }
    }
    Ok(record)
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: Model,
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &ck)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let ck: Checkpoint = serde_json::from_reader(file)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    ck.model.config.validate()?;
    Ok(ck.model)
}
