use serde::{Deserialize, Serialize};

use crate::error::{Result, TaasError};
use crate::ntm::NtmConfig;
use crate::numeric::AdamConfig;
use crate::topic_attention::ProjectionVariant;

/// How the encoder states are reduced to the conditioning vector `s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Topic-attention weighted mixture of encoder states.
    #[default]
    Topic,
    /// The encoder state of the leading `CLS` token.
    Cls,
    /// Unnormalized sum of the real-token encoder states.
    Sum,
}

impl std::str::FromStr for PoolingMode {
    type Err = TaasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topic" => Ok(PoolingMode::Topic),
            "cls" => Ok(PoolingMode::Cls),
            "sum" => Ok(PoolingMode::Sum),
            other => Err(TaasError::config(
                "pooling_mode",
                format!("unknown mode {other:?} (expected topic, cls or sum)"),
            )),
        }
    }
}

impl std::fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoolingMode::Topic => "topic",
            PoolingMode::Cls => "cls",
            PoolingMode::Sum => "sum",
        })
    }
}

/// Where `s` enters the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// One extra, never-masked cross-attention memory slot after `h`.
    #[default]
    MemorySlot,
    /// Added to every decoder input embedding.
    InputEmbedding,
}

impl std::str::FromStr for Conditioning {
    type Err = TaasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory_slot" => Ok(Conditioning::MemorySlot),
            "input_embedding" => Ok(Conditioning::InputEmbedding),
            other => Err(TaasError::config(
                "conditioning",
                format!("unknown value {other:?} (expected memory_slot or input_embedding)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_width: usize,
    /// Longest encoder input, `CLS` included.
    pub max_len: usize,
    /// Longest training target, `EOS` included.
    pub max_summary_len: usize,
    pub dropout: f64,
    pub positional_encoding: bool,
    pub pooling_mode: PoolingMode,
    pub conditioning: Conditioning,
    pub projection_variant: ProjectionVariant,
    pub lambda: f64,
    pub freeze_encoder: bool,
    pub num_topics: usize,
    pub topic_vocab_size: usize,
    /// Width of the topic model's Gaussian latent; `0` means `num_topics`.
    pub latent_dim: usize,
    pub ntm_hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            hidden: 128,
            heads: 2,
            encoder_layers: 2,
            decoder_layers: 2,
            ffn_width: 256,
            max_len: 256,
            max_summary_len: 64,
            dropout: 0.1,
            positional_encoding: true,
            pooling_mode: PoolingMode::Topic,
            conditioning: Conditioning::MemorySlot,
            projection_variant: ProjectionVariant::Residual,
            lambda: 0.0,
            freeze_encoder: false,
            num_topics: 10,
            topic_vocab_size: 0,
            latent_dim: 0,
            ntm_hidden: 64,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("ffn_width", self.ffn_width),
            ("max_summary_len", self.max_summary_len),
            ("topic_vocab_size", self.topic_vocab_size),
            ("ntm_hidden", self.ntm_hidden),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(TaasError::config(field, "must be at least 1"));
            }
        }
        if self.max_len < 2 {
            return Err(TaasError::config("max_len", "must be at least 2"));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(TaasError::config(
                "heads",
                format!("hidden size {} is not divisible by {} heads", self.hidden, self.heads),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TaasError::config("lambda", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TaasError::config("dropout", "must lie in [0, 1)"));
        }
        self.ntm_config().validate()
    }

    pub fn ntm_config(&self) -> NtmConfig {
        NtmConfig {
            vocab_size: self.topic_vocab_size,
            num_topics: self.num_topics,
            latent_dim: if self.latent_dim == 0 { self.num_topics } else { self.latent_dim },
            hidden: self.ntm_hidden,
        }
    }

    pub fn head_width(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Optimization schedule for [`super::train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Topic-model-only epochs run before the joint loop.
    pub ntm_pretrain_epochs: usize,
    pub ntm_learning_rate: f64,
    /// Keeps the topic model fixed during the joint loop.
    pub freeze_ntm: bool,
    /// Stop early after this many epochs without validation improvement; `0`
    /// disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            ntm_pretrain_epochs: 50,
            ntm_learning_rate: 2e-3,
            freeze_ntm: true,
            patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TaasError::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TaasError::config("batch_size", "must be at least 1"));
        }
        self.adam.validate()?;
        if self.ntm_pretrain_epochs > 0 && !(self.ntm_learning_rate > 0.0 && self.ntm_learning_rate.is_finite()) {
            return Err(TaasError::config("ntm_learning_rate", "must be positive"));
        }
        Ok(())
    }
}
