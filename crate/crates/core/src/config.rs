//! Run configuration: one TOML document with `model`, `train`, `decode` and
//! `data` sections, plus `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::inference::DecodeConfig;
use crate::model::{default_length_bins, DecoderKind, ModelConfig};
use crate::numerics::DType;
use crate::train::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Network shape. Vocabulary sizes and the position cap come from the
/// corpus; dropout and label smoothing from the `train` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub decoder: DecoderKind,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    /// Length head support; `0` picks `2·max_len + 8`.
    pub max_length_bins: usize,
    pub precision: DType,
    /// Seed of parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let desk = ModelConfig::desk_scale(1, 1, 1);
        ModelSection {
            decoder: DecoderKind::Disco,
            enc_layers: desk.enc_layers,
            dec_layers: desk.dec_layers,
            model_dim: desk.model_dim,
            hidden_dim: desk.hidden_dim,
            heads: desk.heads,
            max_length_bins: 0,
            precision: DType::F32,
            init_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub task: TaskKind,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    pub translations: usize,
    pub swap_prob: f64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Read the corpus from this directory instead of generating it.
    pub dir: Option<PathBuf>,
    /// Dev sentences decoded at each in-training evaluation.
    pub eval_sentences: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            task: TaskKind::Copy,
            vocab_size: 32,
            min_len: 3,
            max_len: 12,
            seed: 7,
            translations: 2,
            swap_prob: 0.3,
            train_size: 10_000,
            dev_size: 200,
            test_size: 200,
            dir: None,
            eval_sentences: 100,
        }
    }
}

impl DataConfig {
    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            translations: self.translations,
            swap_prob: self.swap_prob,
            ..TaskSpec::new(self.task, self.vocab_size, self.min_len, self.max_len, self.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.decode.validate()?;
        if self.data.eval_sentences == 0 {
            return Err(Error::Config("data.eval_sentences must be positive".into()));
        }
        if self.data.dir.is_none() {
            self.data.task_spec().validate()?;
        }
        self.model_config(1, 1)?;
        Ok(())
    }

    /// Full network configuration for the given vocabulary sizes.
    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> Result<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            enc_layers: m.enc_layers,
            dec_layers: m.dec_layers,
            model_dim: m.model_dim,
            hidden_dim: m.hidden_dim,
            heads: m.heads,
            src_vocab,
            tgt_vocab,
            max_positions: self.data.max_len,
            max_length_bins: if m.max_length_bins == 0 {
                default_length_bins(self.data.max_len)
            } else {
                m.max_length_bins
            },
            dropout: self.train.dropout,
            label_smoothing: self.train.label_smoothing,
            decoder: m.decoder,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

/// Parses a config document, applies `section.key=value` overrides in order
/// and validates the result. Override values are read as TOML literals and
/// fall back to plain strings.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::format("config", e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.len() < 2 || path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} must be section.key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a section")))?;
    }
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
