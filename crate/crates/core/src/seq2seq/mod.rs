//! Transformer encoder-decoder conditioned on a pooled document vector, with
//! the joint topic-model and summarization objective.

mod config;
mod generate;
mod layers;
mod model;
mod train;

pub use config::{Conditioning, ModelConfig, PoolingMode, TrainConfig};
pub use generate::{ConditionedDecoder, Generated};
pub use layers::{causal_mask, key_mask, positional_encoding, DecoderLayer, Dropout, EncoderLayer, MultiHeadAttention};
pub use model::{
    decoder_prefix, pool, DocumentContext, DocumentTerms, EncoderOutput, LossBreakdown, TaasModel, ENCODER_PREFIXES, NTM_PREFIX,
};
pub use train::{train, train_step, MetricsRow, Split, TrainOutcome};
