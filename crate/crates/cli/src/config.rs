use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use taas_core::corpus::NUM_SPECIAL;
use taas_core::decoding::DecodeConfig;
use taas_core::numeric::AdamConfig;
use taas_core::seq2seq::{Conditioning, ModelConfig, PoolingMode, TrainConfig};
use taas_core::topic_attention::ProjectionVariant;
use taas_core::TaasError;

use crate::error::CliError;

/// Everything a run needs, as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub validation_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Share of the training file held out when no validation file is given.
    pub holdout_fraction: f64,
    pub vocab_cap: usize,
    pub vocab_min_count: usize,
    pub topic_vocab_cap: usize,
    pub topic_vocab_min_count: usize,
    /// One word per line; the embedded English list when unset.
    pub stopwords_path: Option<PathBuf>,

    pub hidden: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_width: usize,
    pub max_len: usize,
    pub max_summary_len: usize,
    pub dropout: f64,
    pub positional_encoding: bool,
    pub pooling_mode: PoolingMode,
    pub conditioning: Conditioning,
    pub projection_variant: ProjectionVariant,
    pub lambda: f64,
    pub freeze_encoder: bool,
    pub num_topics: usize,
    pub latent_dim: usize,
    pub ntm_hidden: usize,
    pub seed: u64,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ntm_pretrain_epochs: usize,
    pub ntm_learning_rate: f64,
    pub freeze_ntm: bool,
    pub patience: usize,

    pub beam_size: usize,
    pub length_norm_exponent: f64,
    pub min_len: usize,
    pub block_trigrams: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let d = DecodeConfig::default();
        RunConfig {
            train_path: None,
            validation_path: None,
            output_dir: None,
            holdout_fraction: 0.1,
            vocab_cap: 10_000,
            vocab_min_count: 1,
            topic_vocab_cap: 2_000,
            topic_vocab_min_count: 1,
            stopwords_path: None,
            hidden: m.hidden,
            heads: m.heads,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            ffn_width: m.ffn_width,
            max_len: m.max_len,
            max_summary_len: m.max_summary_len,
            dropout: m.dropout,
            positional_encoding: m.positional_encoding,
            pooling_mode: m.pooling_mode,
            conditioning: m.conditioning,
            projection_variant: m.projection_variant,
            lambda: m.lambda,
            freeze_encoder: m.freeze_encoder,
            num_topics: m.num_topics,
            latent_dim: m.latent_dim,
            ntm_hidden: m.ntm_hidden,
            seed: m.seed,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            ntm_pretrain_epochs: t.ntm_pretrain_epochs,
            ntm_learning_rate: t.ntm_learning_rate,
            freeze_ntm: t.freeze_ntm,
            patience: t.patience,
            beam_size: d.beam_size,
            length_norm_exponent: d.length_norm_exponent,
            min_len: d.min_len,
            block_trigrams: d.block_trigrams,
        }
    }
}

fn invalid_field(field: &str, reason: impl Into<String>) -> TaasError {
    TaasError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Parses `key=value`; the value is read as JSON when possible and as a
/// bare string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Invalid {
        flag: "--set".into(),
        reason: format!("expected key=value, got {s:?}"),
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl RunConfig {
    /// Reads the optional config file and applies `overrides` on top.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, Value)]) -> anyhow::Result<Self> {
        let mut map = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Invalid {
                    flag: "--config".into(),
                    reason: format!("{}: {e}", p.display()),
                })?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(invalid_field("config", "must be a flat JSON object").into()),
                    Err(e) => return Err(invalid_field("config", e.to_string()).into()),
                }
            }
            None => Map::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        match serde_json::from_value(Value::Object(map.clone())) {
            Ok(config) => Ok(config),
            Err(e) => {
                let culprit = map.iter().find(|(k, v)| {
                    let single = Map::from_iter([((*k).clone(), (*v).clone())]);
                    serde_json::from_value::<RunConfig>(Value::Object(single)).is_err()
                });
                let field = culprit.map_or("config", |(k, _)| k.as_str());
                Err(invalid_field(field, e.to_string()).into())
            }
        }
    }

    /// Checks every field, including that referenced files exist.
    pub fn validate(&self) -> Result<(), TaasError> {
        match &self.train_path {
            None => return Err(invalid_field("train_path", "is required")),
            Some(p) if !p.is_file() => return Err(invalid_field("train_path", format!("{} does not exist", p.display()))),
            _ => {}
        }
        if let Some(p) = &self.validation_path {
            if !p.is_file() {
                return Err(invalid_field("validation_path", format!("{} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.stopwords_path {
            if !p.is_file() {
                return Err(invalid_field("stopwords_path", format!("{} does not exist", p.display())));
            }
        }
        if self.output_dir.is_none() {
            return Err(invalid_field("output_dir", "is required"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(invalid_field("holdout_fraction", "must lie strictly between 0 and 1"));
        }
        if self.vocab_cap == 0 {
            return Err(invalid_field("vocab_cap", "must be at least 1"));
        }
        if self.topic_vocab_cap == 0 {
            return Err(invalid_field("topic_vocab_cap", "must be at least 1"));
        }
        self.model_config(NUM_SPECIAL + 1, 1).validate()?;
        self.train_config().validate()?;
        self.decode_config().validate()
    }

    pub fn model_config(&self, vocab_size: usize, topic_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden: self.hidden,
            heads: self.heads,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            ffn_width: self.ffn_width,
            max_len: self.max_len,
            max_summary_len: self.max_summary_len,
            dropout: self.dropout,
            positional_encoding: self.positional_encoding,
            pooling_mode: self.pooling_mode,
            conditioning: self.conditioning,
            projection_variant: self.projection_variant,
            lambda: self.lambda,
            freeze_encoder: self.freeze_encoder,
            num_topics: self.num_topics,
            topic_vocab_size,
            latent_dim: self.latent_dim,
            ntm_hidden: self.ntm_hidden,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            ntm_pretrain_epochs: self.ntm_pretrain_epochs,
            ntm_learning_rate: self.ntm_learning_rate,
            freeze_ntm: self.freeze_ntm,
            patience: self.patience,
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            beam_size: self.beam_size,
            max_summary_len: self.max_summary_len,
            length_norm_exponent: self.length_norm_exponent,
            min_len: self.min_len,
            block_trigrams: self.block_trigrams,
        }
    }
}
