use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    CharText,
    CopyTask,
    LongRangeRecall,
}

/// One training example. Language-model samples carry a per-position
/// next-token target (`None` positions are ignored by the loss);
/// classification samples carry a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub targets: Vec<Option<usize>>,
    pub label: Option<usize>,
}

/// Character-level vocabulary built from the sorted set of characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl From<Vec<char>> for CharVocab {
    fn from(mut chars: Vec<char>) -> Self {
        chars.sort_unstable();
        chars.dedup();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        CharVocab { chars, index }
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

impl CharVocab {
    pub fn from_text(text: &str) -> Self {
        Self::from(text.chars().collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.index
                    .get(&c)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&i| {
                self.chars
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("token id {i} not in vocabulary")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub samples: Vec<Sample>,
    pub vocab_size: usize,
    /// Set for classification datasets.
    pub n_classes: Option<usize>,
    pub vocab: Option<CharVocab>,
}

/// Token 0 separates the prefix from its copy.
const COPY_SEP: usize = 0;

impl Dataset {
    /// Sequences `p SEP p` of length `2 * prefix_len + 1`; only the copied
    /// half is scored. Symbols are drawn from `1..vocab_size`.
    pub fn copy_task(n_samples: usize, prefix_len: usize, vocab_size: usize, seed: u64) -> Result<Self> {
        if prefix_len == 0 || vocab_size < 2 {
            return Err(Error::InvalidInput(
                "copy task needs prefix_len >= 1 and vocab_size >= 2".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n_samples)
            .map(|_| {
                let prefix: Vec<usize> = (0..prefix_len).map(|_| rng.random_range(1..vocab_size)).collect();
                let mut tokens = prefix.clone();
                tokens.push(COPY_SEP);
                tokens.extend_from_slice(&prefix);
                // position i predicts token i + 1; score the copy only
                let targets = (0..tokens.len())
                    .map(|i| (i >= prefix_len && i + 1 < tokens.len()).then(|| tokens[i + 1]))
                    .collect();
                Sample {
                    tokens,
                    targets,
                    label: None,
                }
            })
            .collect();
        Ok(Dataset {
            kind: DatasetKind::CopyTask,
            samples,
            vocab_size,
            n_classes: None,
            vocab: None,
        })
    }

    /// Length-`seq_len` sequences of distractor tokens with one key token
    /// (ids `0..n_keys`) placed at least `seq_len / 2` positions before the
    /// end. The label is the key id.
    pub fn long_range_recall(
        n_samples: usize,
        seq_len: usize,
        n_keys: usize,
        n_distractors: usize,
        seed: u64,
    ) -> Result<Self> {
        if seq_len < 4 || n_keys < 2 || n_distractors == 0 {
            return Err(Error::InvalidInput(
                "long-range recall needs seq_len >= 4, n_keys >= 2 and distractors".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last_key_pos = seq_len - 1 - seq_len / 2;
        let samples = (0..n_samples)
            .map(|_| {
                let key = rng.random_range(0..n_keys);
                let pos = rng.random_range(0..=last_key_pos);
                let tokens: Vec<usize> = (0..seq_len)
                    .map(|i| {
                        if i == pos {
                            key
                        } else {
                            n_keys + rng.random_range(0..n_distractors)
                        }
                    })
                    .collect();
                let label = Self::recall_label(&tokens, n_keys);
                debug_assert_eq!(label, Some(key));
                Sample {
                    tokens,
                    targets: vec![None; seq_len],
                    label,
                }
            })
            .collect();
        Ok(Dataset {
            kind: DatasetKind::LongRangeRecall,
            samples,
            vocab_size: n_keys + n_distractors,
            n_classes: Some(n_keys),
            vocab: None,
        })
    }

    /// The label rule of the recall task: the id of the first key token.
    pub fn recall_label(tokens: &[usize], n_keys: usize) -> Option<usize> {
        tokens.iter().copied().find(|&t| t < n_keys)
    }

    /// Non-overlapping windows of `seq_len + 1` characters; every position
    /// predicts the next character.
    pub fn char_text(text: &str, seq_len: usize) -> Result<Self> {
        if seq_len < 2 {
            return Err(Error::InvalidInput("seq_len must be >= 2".into()));
        }
        let vocab = CharVocab::from_text(text);
        let ids = vocab.encode(text)?;
        let samples: Vec<Sample> = ids
            .chunks_exact(seq_len + 1)
            .map(|w| Sample {
                tokens: w[..seq_len].to_vec(),
                targets: w[1..].iter().map(|&t| Some(t)).collect(),
                label: None,
            })
            .collect();
        if samples.is_empty() {
            return Err(Error::InvalidInput(format!(
                "text of {} characters is shorter than one window of {}",
                ids.len(),
                seq_len + 1
            )));
        }
        Ok(Dataset {
            kind: DatasetKind::CharText,
            samples,
            vocab_size: vocab.len(),
            n_classes: None,
            vocab: Some(vocab),
        })
    }

    pub fn char_text_file(path: impl AsRef<Path>, seq_len: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::char_text(&text, seq_len)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.samples.iter().map(|s| s.tokens.len()).max().unwrap_or(0)
    }

    /// Deterministic shuffled split; the second part holds
    /// `round(val_fraction * len)` samples.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidInput(format!(
                "validation fraction must be in [0, 1), got {val_fraction}"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = (val_fraction * self.len() as f64).round() as usize;
        let part = |ids: &[usize]| Dataset {
            samples: ids.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone()
        };
        Ok((part(&idx[n_val..]), part(&idx[..n_val])))
    }
}

impl Sample {
    /// Copy with the token at `pos` replaced.
    pub fn with_token(&self, pos: usize, token: usize) -> Self {
        let mut s = self.clone();
        s.tokens[pos] = token;
        s
    }
}
