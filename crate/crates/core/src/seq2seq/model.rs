use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Conditioning, ModelConfig, PoolingMode};
use super::layers::{causal_mask, key_mask, positional_encoding, DecoderLayer, Dropout, EncoderLayer};
use crate::corpus::{EncodedPair, BOS};
use crate::error::{Result, TaasError};
use crate::ntm::{NeuralTopicModel, NtmForward};
use crate::numeric::nn::{LayerNorm, Linear};
use crate::numeric::{load_checkpoint, save_checkpoint, Graph, Manifest, Matrix, ParamId, ParamStore, Var};
use crate::topic_attention::{attend, pool_and_normalize, pool_sequence, score, TopicAttentionWeights, TopicProjection};

/// Parameter-name prefixes frozen by `freeze_encoder`.
pub const ENCODER_PREFIXES: [&str; 2] = ["embed.", "encoder."];
pub const NTM_PREFIX: &str = "ntm.";

/// Last-layer encoder states of one document.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `N x H`.
    pub h: Matrix,
    pub mask: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_ntm: f64,
    pub l_sum: f64,
    pub combined: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(lambda: f64, l_ntm: f64, l_sum: f64) -> Self {
        LossBreakdown {
            l_ntm,
            l_sum,
            combined: lambda * l_ntm + (1.0 - lambda) * l_sum,
            lambda,
        }
    }
}

/// Everything the decoder needs about one document at inference time.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentContext {
    pub encoder: EncoderOutput,
    pub attention: TopicAttentionWeights,
    /// Pooled vector `s` for the configured pooling mode.
    pub pooled: Vec<f64>,
}

/// Graph nodes of one teacher-forced document pass.
#[derive(Clone, Copy, Debug)]
pub struct DocumentTerms {
    pub ntm: NtmForward,
    /// Summed target cross-entropy.
    pub cross_entropy: Var,
    pub tokens: usize,
}

/// The full summarizer: topic model, topic projection, shared token
/// embeddings, encoder and decoder stacks and the output layer.
#[derive(Clone, Debug)]
pub struct TaasModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub ntm: NeuralTopicModel,
    pub projection: TopicProjection,
    pub embedding: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub encoder_norm: LayerNorm,
    pub decoder: Vec<DecoderLayer>,
    pub decoder_norm: LayerNorm,
    pub output: Linear,
}

impl TaasModel {
    /// Builds a freshly initialized model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new(config.seed);
        let rng = &mut rng;
        let s = &mut store;
        let (h, heads, ffn) = (config.hidden, config.heads, config.ffn_width);

        let ntm = NeuralTopicModel::new(s, "ntm", config.ntm_config(), rng)?;
        let projection = TopicProjection::new(s, "topic", config.topic_vocab_size, h, config.projection_variant, rng)?;
        let embedding = s.weight("embed.tokens", config.vocab_size, h, rng)?;
        let encoder = (0..config.encoder_layers)
            .map(|l| EncoderLayer::new(s, &format!("encoder.{l}"), h, heads, ffn, rng))
            .collect::<Result<_>>()?;
        let encoder_norm = LayerNorm::new(s, "encoder.norm", h)?;
        let decoder = (0..config.decoder_layers)
            .map(|l| DecoderLayer::new(s, &format!("decoder.{l}"), h, heads, ffn, rng))
            .collect::<Result<_>>()?;
        let decoder_norm = LayerNorm::new(s, "decoder.norm", h)?;
        let output = Linear::new(s, "output", h, config.vocab_size, rng)?;

        let mut model = TaasModel {
            config,
            store,
            ntm,
            projection,
            embedding,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            output,
        };
        model.set_encoder_frozen(model.config.freeze_encoder);
        Ok(model)
    }

    pub fn set_encoder_frozen(&mut self, frozen: bool) {
        for prefix in ENCODER_PREFIXES {
            self.store.set_frozen_prefix(prefix, frozen);
        }
    }

    pub fn set_ntm_frozen(&mut self, frozen: bool) {
        self.store.set_frozen_prefix(NTM_PREFIX, frozen);
    }

    fn embed(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(TaasError::Contract(format!(
                "token id {bad} outside vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        let table = g.param(store, self.embedding);
        let rows = g.gather_rows(table, ids)?;
        let scaled = g.scale(rows, (self.config.hidden as f64).sqrt());
        if self.config.positional_encoding {
            g.add_const(scaled, &positional_encoding(ids.len(), self.config.hidden))
        } else {
            Ok(scaled)
        }
    }

    /// Encoder stack on the graph; returns `h` (`N x H`).
    pub fn encode_graph(&self, g: &mut Graph, store: &ParamStore, ids: &[usize], mask: &[bool], dropout: &mut Dropout) -> Result<Var> {
        if ids.is_empty() {
            return Err(TaasError::EmptySequence);
        }
        if ids.len() > self.config.max_len {
            return Err(TaasError::Contract(format!(
                "input of {} tokens exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if mask.len() != ids.len() {
            return Err(TaasError::dims("encoder mask", (ids.len(), 1), (mask.len(), 1)));
        }
        let keep = key_mask(ids.len(), mask);
        let x = self.embed(g, store, ids)?;
        let mut x = dropout.apply(g, x)?;
        for layer in &self.encoder {
            x = layer.forward(g, store, x, &keep, dropout)?;
        }
        self.encoder_norm.forward(g, store, x)
    }

    /// Topic embeddings `P` on the graph, with `beta` already present.
    pub fn topics_graph(&self, g: &mut Graph, store: &ParamStore, beta: Var) -> Result<Var> {
        self.projection.forward(g, store, beta)
    }

    /// Pools `h` according to the configured mode.
    pub fn pool_graph(&self, g: &mut Graph, h: Var, mask: &[bool], topics: Option<Var>) -> Result<Var> {
        match self.config.pooling_mode {
            PoolingMode::Topic => {
                let topics = topics.ok_or_else(|| TaasError::Contract("topic pooling needs topic embeddings".into()))?;
                Ok(attend(g, topics, h, mask)?.pooled)
            }
            PoolingMode::Cls => g.slice_rows(h, 0, 1),
            PoolingMode::Sum => {
                let weights = Matrix::row_vector(&mask.iter().map(|&m| f64::from(u8::from(m))).collect::<Vec<_>>());
                let w = g.input(weights);
                g.matmul(w, h)
            }
        }
    }

    /// Decoder stack on the graph: logits (`L x V`) for every prefix position.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        mask: &[bool],
        pooled: Var,
        prefix: &[usize],
        dropout: &mut Dropout,
    ) -> Result<Var> {
        if prefix.is_empty() {
            return Err(TaasError::Contract("decoder prefix is empty".into()));
        }
        let mut x = self.embed(g, store, prefix)?;
        let (memory, memory_mask) = match self.config.conditioning {
            Conditioning::MemorySlot => {
                let memory = g.concat_rows(&[h, pooled])?;
                let mut m = mask.to_vec();
                m.push(true);
                (memory, m)
            }
            Conditioning::InputEmbedding => {
                x = g.add_row(x, pooled)?;
                (h, mask.to_vec())
            }
        };
        let mut x = dropout.apply(g, x)?;
        let causal = causal_mask(prefix.len());
        let memory_keep = key_mask(prefix.len(), &memory_mask);
        for layer in &self.decoder {
            x = layer.forward(g, store, x, &causal, memory, &memory_keep, dropout)?;
        }
        let x = self.decoder_norm.forward(g, store, x)?;
        self.output.forward(g, store, x)
    }

    /// One teacher-forced pass over a document: topic model on its
    /// bag of words, topic embeddings, encoder, pooling, decoder and the
    /// summed target cross-entropy.
    pub fn document_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        pair: &EncodedPair,
        noise: Option<&Matrix>,
        dropout: &mut Dropout,
    ) -> Result<DocumentTerms> {
        if pair.target.is_empty() {
            return Err(TaasError::Contract(format!("pair {} has an empty target", pair.id)));
        }
        let bow = Matrix::row_vector(&pair.bow.as_f64());
        let ntm = self.ntm.forward(g, store, &bow, noise)?;
        let mask = vec![true; pair.input.len()];
        let h = self.encode_graph(g, store, &pair.input, &mask, dropout)?;
        let topics = match self.config.pooling_mode {
            PoolingMode::Topic => Some(self.topics_graph(g, store, ntm.beta)?),
            _ => None,
        };
        let pooled = self.pool_graph(g, h, &mask, topics)?;
        let prefix = decoder_prefix(&pair.target);
        let logits = self.decode_graph(g, store, h, &mask, pooled, &prefix, dropout)?;
        let targets: Vec<Option<usize>> = pair.target.iter().map(|&t| Some(t)).collect();
        let cross_entropy = g.cross_entropy_sum(logits, &targets)?;
        Ok(DocumentTerms {
            ntm,
            cross_entropy,
            tokens: pair.target.len(),
        })
    }

    /// Deterministic (no dropout, mean latent) losses over `pairs`:
    /// `l_ntm` is the per-document mean, `l_sum` the per-token mean.
    pub fn summarization_loss(&self, pairs: &[EncodedPair]) -> Result<LossBreakdown> {
        if pairs.is_empty() {
            return Err(TaasError::EmptyCorpus("no pairs to score".into()));
        }
        let mut ntm = 0.0;
        let mut ce = 0.0;
        let mut tokens = 0;
        for pair in pairs {
            let mut g = Graph::new();
            let terms = self.document_graph(&mut g, &self.store, pair, None, &mut Dropout::off())?;
            ntm += g.scalar(terms.ntm.loss_sum);
            ce += g.scalar(terms.cross_entropy);
            tokens += terms.tokens;
        }
        Ok(LossBreakdown::new(self.config.lambda, ntm / pairs.len() as f64, ce / tokens as f64))
    }

    /// Encoder states of one (possibly padded) input.
    pub fn encode(&self, ids: &[usize], mask: &[bool]) -> Result<EncoderOutput> {
        let mut g = Graph::new();
        let h = self.encode_graph(&mut g, &self.store, ids, mask, &mut Dropout::off())?;
        Ok(EncoderOutput {
            h: g.value(h).clone(),
            mask: mask.to_vec(),
        })
    }

    /// Topic embeddings `P` from the current topic-word distribution.
    pub fn topic_embeddings(&self) -> Result<Matrix> {
        self.projection.project_topics(&self.store, &self.ntm.beta(&self.store))
    }

    /// Encodes a document and derives its topic attention and pooled vector.
    pub fn condition(&self, ids: &[usize], mask: &[bool]) -> Result<DocumentContext> {
        let encoder = self.encode(ids, mask)?;
        let attention = pool_and_normalize(&score(&encoder.h, &self.topic_embeddings()?)?, mask)?;
        let pooled = pool(self.config.pooling_mode, &encoder, Some(&attention))?;
        Ok(DocumentContext {
            encoder,
            attention,
            pooled,
        })
    }

    /// Next-token logits after `prefix` (which starts with `BOS`).
    pub fn decode_step(&self, prefix: &[usize], encoder: &EncoderOutput, pooled: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let h = g.input(encoder.h.clone());
        let s = g.input(Matrix::row_vector(pooled));
        let logits = self.decode_graph(&mut g, &self.store, h, &encoder.mask, s, prefix, &mut Dropout::off())?;
        let m = g.value(logits);
        Ok(m.row(m.rows() - 1).to_vec())
    }

    /// Writes the checkpoint and the JSON config sidecar.
    pub fn save(&self, checkpoint: &Path, config: &Path) -> Result<()> {
        save_checkpoint(&self.store, checkpoint)?;
        std::fs::write(config, serde_json::to_string_pretty(&self.config)? + "\n")?;
        Ok(())
    }

    /// Rebuilds the architecture from the sidecar and loads the checkpoint,
    /// refusing if parameter names or shapes disagree.
    pub fn load(checkpoint: &Path, config: &Path) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
        let store = load_checkpoint(checkpoint)?;
        Self::with_store(config, store)
    }

    pub fn with_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        let mut model = TaasModel::new(config)?;
        let want = Manifest::of(&model.store);
        let got = Manifest::of(&store);
        if want.params.len() != got.params.len() {
            return Err(TaasError::Checkpoint(format!(
                "config expects {} parameters, checkpoint has {}",
                want.params.len(),
                got.params.len()
            )));
        }
        for (w, g) in want.params.iter().zip(&got.params) {
            if w.name != g.name || (w.rows, w.cols) != (g.rows, g.cols) {
                return Err(TaasError::Checkpoint(format!(
                    "config expects {} ({}x{}), checkpoint has {} ({}x{})",
                    w.name, w.rows, w.cols, g.name, g.rows, g.cols
                )));
            }
        }
        model.store = store;
        Ok(model)
    }
}

/// `BOS` followed by the target without its last token.
pub fn decoder_prefix(target: &[usize]) -> Vec<usize> {
    std::iter::once(BOS)
        .chain(target[..target.len().saturating_sub(1)].iter().copied())
        .collect()
}

/// Mode-dispatched pooling of concrete encoder states.
pub fn pool(mode: PoolingMode, encoder: &EncoderOutput, attention: Option<&TopicAttentionWeights>) -> Result<Vec<f64>> {
    let h = &encoder.h;
    match mode {
        PoolingMode::Topic => {
            let attention = attention.ok_or_else(|| TaasError::Contract("topic pooling needs attention weights".into()))?;
            pool_sequence(&attention.alpha_hat, h)
        }
        PoolingMode::Cls => {
            if h.rows() == 0 {
                return Err(TaasError::EmptySequence);
            }
            Ok(h.row(0).to_vec())
        }
        PoolingMode::Sum => {
            let mut s = vec![0.0; h.cols()];
            for (r, &keep) in encoder.mask.iter().enumerate() {
                if keep {
                    for (acc, v) in s.iter_mut().zip(h.row(r)) {
                        *acc += v;
                    }
                }
            }
            Ok(s)
        }
    }
}
