use std::path::{Path, PathBuf};

use pde_attention::model::{AblationConfig, DatasetKind, ModelConfig, TrainConfig};
use pde_attention::pde::{PdeConfig, PdeKind};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Everything a run can be configured with. Each subcommand reads its own
/// section plus the global seed and output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub evolve: EvolveConfig,
    pub verify: VerifyConfig,
    pub train: TrainSection,
    pub bench: BenchConfig,
    pub ablate: AblationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Onehot,
    Uniform,
    /// Softmax of random Gaussian queries and keys.
    Softmax,
    /// Square CSV matrix read from `input`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub init: InitKind,
    #[serde(rename = "T")]
    pub t: usize,
    /// Query/key width for the softmax initial field.
    pub d_head: usize,
    pub input: Option<PathBuf>,
    pub causal: bool,
    pub pde: PdeConfig,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            init: InitKind::Onehot,
            t: 16,
            d_head: 8,
            input: None,
            causal: false,
            pde: PdeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Empty runs every suite.
    pub suites: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_samples: usize,
    pub val_fraction: f64,
    /// Copy task.
    pub prefix_len: usize,
    pub vocab_size: usize,
    /// Recall task and character text.
    pub seq_len: usize,
    pub n_keys: usize,
    pub n_distractors: usize,
    pub text_path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::CopyTask,
            n_samples: 128,
            val_fraction: 0.2,
            prefix_len: 15,
            vocab_size: 8,
            seq_len: 64,
            n_keys: 4,
            n_distractors: 12,
            text_path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: DatasetConfig,
    /// Vocabulary size, sequence length, class count and task are filled
    /// in from the dataset.
    pub model: ModelConfig,
    pub optimizer: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub kinds: Vec<PdeKind>,
    #[serde(rename = "T")]
    pub sizes: Vec<usize>,
    /// Timing batches per point; the median is reported.
    pub batches: usize,
    pub min_batch_ms: u64,
    /// Largest T included in the scaling fit.
    pub fit_max_t: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            kinds: PdeKind::ALL.to_vec(),
            sizes: vec![128, 256, 512, 1024, 2048, 4096],
            batches: 5,
            min_batch_ms: 20,
            fit_max_t: 2048,
        }
    }
}

/// Read the config file (if any) and apply `key.path=value` overrides in
/// order. Values are parsed as TOML literals, falling back to strings.
pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for (key, raw) in overrides {
        set_path(&mut table, key, parse_value(raw))?;
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}

pub fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn to_toml(cfg: &ExperimentConfig) -> Result<String, CliError> {
    toml::to_string_pretty(cfg).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
}
