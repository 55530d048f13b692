//! Flat `key=value` run configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use medctx::corpus::Split;
use medctx::encoder::{EncoderConfig, TrainConfig};
use medctx::eval::MatchMode;
use medctx::preproc::DEFAULT_VOCAB_SIZE;
use medctx::scalar::Precision;
use medctx::synth::{Difficulty, GeneratorSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: expected {expected}")]
    Value { key: String, value: String, expected: String },
    #[error("{path}:{line}: expected key=value")]
    Syntax { path: String, line: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    })
}

/// Sets one encoder field. Returns false for keys that are not encoder keys.
pub fn set_encoder_key(cfg: &mut EncoderConfig, key: &str, value: &str) -> Result<bool, ConfigError> {
    match key {
        "layers" => cfg.layers = parse(key, value, "an integer")?,
        "hidden_dim" => cfg.hidden_dim = parse(key, value, "an integer")?,
        "heads" => cfg.heads = parse(key, value, "an integer")?,
        "ffn_dim" => cfg.ffn_dim = parse(key, value, "an integer")?,
        "max_len" => cfg.max_len = parse(key, value, "an integer")?,
        "dropout_rate" => cfg.dropout_rate = parse(key, value, "a number")?,
        "init_seed" => cfg.seed = parse(key, value, "an integer")?,
        "precision" => {
            cfg.precision = Precision::from_bits(parse(key, value, "32 or 64")?).ok_or_else(|| ConfigError::Value {
                key: key.into(),
                value: value.into(),
                expected: "32 or 64".into(),
            })?
        }
        _ => return Ok(false),
    }
    Ok(true)
}

/// Sets one optimization field. Returns false for other keys.
pub fn set_train_key(tc: &mut TrainConfig, key: &str, value: &str) -> Result<bool, ConfigError> {
    match key {
        "learning_rate" => tc.learning_rate = parse(key, value, "a number")?,
        "batch_size" => tc.batch_size = parse(key, value, "an integer")?,
        "max_epochs" => tc.max_epochs = parse(key, value, "an integer")?,
        "patience" => tc.patience = parse(key, value, "an integer")?,
        "beta1" => tc.beta1 = parse(key, value, "a number")?,
        "beta2" => tc.beta2 = parse(key, value, "a number")?,
        "epsilon" => tc.epsilon = parse(key, value, "a number")?,
        "clip_norm" => tc.clip_norm = parse(key, value, "a number")?,
        "shuffle_seed" => tc.seed = parse(key, value, "an integer")?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn encoder_entries(cfg: &EncoderConfig) -> Vec<(&'static str, String)> {
    vec![
        ("layers", cfg.layers.to_string()),
        ("hidden_dim", cfg.hidden_dim.to_string()),
        ("heads", cfg.heads.to_string()),
        ("ffn_dim", cfg.ffn_dim.to_string()),
        ("max_len", cfg.max_len.to_string()),
        ("dropout_rate", cfg.dropout_rate.to_string()),
        ("init_seed", cfg.seed.to_string()),
        ("precision", cfg.precision.bits().to_string()),
    ]
}

pub fn train_entries(tc: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("learning_rate", tc.learning_rate.to_string()),
        ("batch_size", tc.batch_size.to_string()),
        ("max_epochs", tc.max_epochs.to_string()),
        ("patience", tc.patience.to_string()),
        ("beta1", tc.beta1.to_string()),
        ("beta2", tc.beta2.to_string()),
        ("epsilon", tc.epsilon.to_string()),
        ("clip_norm", tc.clip_norm.to_string()),
        ("shuffle_seed", tc.seed.to_string()),
    ]
}

/// Splits text into `(line number, key, value)`; blank lines and `#` comments
/// are skipped.
pub fn parse_lines<'a>(path: &str, text: &'a str) -> Result<Vec<(usize, &'a str, &'a str)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
            path: path.to_string(),
            line: i + 1,
        })?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

/// Everything a command may need. File values are applied first, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Target piece count when building a vocabulary.
    pub vocab_size: usize,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub task: Option<String>,
    pub split: Split,
    pub mode: MatchMode,
    pub gold_spans: bool,
    pub synth: GeneratorSpec,
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            vocab_size: DEFAULT_VOCAB_SIZE,
            data: None,
            model: None,
            out: None,
            input: None,
            task: None,
            split: Split::Test,
            mode: MatchMode::Strict,
            gold_spans: true,
            synth: GeneratorSpec::default(),
            samples: 240,
        }
    }
}

fn on_off(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            expected: "on or off".into(),
        }),
    }
}

fn named<T>(key: &str, value: &str, found: Option<T>, expected: impl Display) -> Result<T, ConfigError> {
    found.ok_or_else(|| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        expected: expected.to_string(),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if set_encoder_key(&mut self.encoder, key, value)? || set_train_key(&mut self.train, key, value)? {
            return Ok(());
        }
        let s = &mut self.synth;
        match key {
            "seed" => {
                let seed: u64 = parse(key, value, "an integer")?;
                self.encoder.seed = seed;
                self.train.seed = seed;
                s.seed = seed;
            }
            "vocab_size" => self.vocab_size = parse(key, value, "an integer")?,
            "data" => self.data = Some(value.into()),
            "model" => self.model = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "in" => self.input = Some(value.into()),
            "task" => self.task = Some(value.into()),
            "split" => self.split = named(key, value, Split::parse(value), "train, dev or test")?,
            "mode" => self.mode = named(key, value, MatchMode::parse(value), "strict or lenient")?,
            "gold_spans" => self.gold_spans = on_off(key, value)?,
            "samples" => self.samples = parse(key, value, "an integer")?,
            "train_docs" => s.n_docs[0] = parse(key, value, "an integer")?,
            "dev_docs" => s.n_docs[1] = parse(key, value, "an integer")?,
            "test_docs" => s.n_docs[2] = parse(key, value, "an integer")?,
            "min_mentions" => s.mentions_per_doc.0 = parse(key, value, "an integer")?,
            "max_mentions" => s.mentions_per_doc.1 = parse(key, value, "an integer")?,
            "lexicon_size" => s.lexicon_size = parse(key, value, "an integer")?,
            "noise_rate" => {
                let rate: f64 = parse(key, value, "a number")?;
                s.difficulty = if rate > 0.0 {
                    Difficulty::Noisy { rate }
                } else {
                    Difficulty::Separable
                };
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, path: &str, text: &str) -> Result<(), ConfigError> {
        for (_, k, v) in parse_lines(path, text)? {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&path.display().to_string(), &text)
    }
}
