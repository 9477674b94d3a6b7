#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taas_core::numeric::Matrix;

/// Three disjoint three-word clusters; every document draws all of its words
/// from one cluster.
pub const CLUSTERS: [[usize; 3]; 3] = [[0, 1, 2], [3, 4, 5], [6, 7, 8]];

pub fn synthetic_bows(docs: usize, words_per_doc: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(docs, 9);
    for d in 0..docs {
        let cluster = &CLUSTERS[rng.random_range(0..3)];
        for _ in 0..words_per_doc {
            let w = *cluster.choose(&mut rng).unwrap();
            m.set(d, w, m.get(d, w) + 1.0);
        }
    }
    m
}

/// Mean over clusters of the largest total probability any single topic row
/// gives to that cluster's words.
pub fn topic_recovery(beta: &Matrix) -> f64 {
    CLUSTERS
        .iter()
        .map(|c| {
            (0..beta.rows())
                .map(|k| c.iter().map(|&w| beta.get(k, w)).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / CLUSTERS.len() as f64
}

pub mod pipeline {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use taas_core::corpus::{BowVector, EncodedPair, CLS, EOS};
    use taas_core::numeric::gradcheck::{check_gradients, sample_coords, GradCheckReport};
    use taas_core::numeric::Graph;
    use taas_core::seq2seq::{Dropout, ModelConfig, PoolingMode, TaasModel};

    pub fn micro_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            hidden: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            ffn_width: 8,
            max_len: 8,
            max_summary_len: 4,
            dropout: 0.1,
            pooling_mode: PoolingMode::Topic,
            lambda: 0.5,
            num_topics: 2,
            topic_vocab_size: 5,
            ntm_hidden: 4,
            seed: 13,
            ..Default::default()
        }
    }

    pub fn micro_pairs() -> Vec<EncodedPair> {
        vec![
            EncodedPair {
                id: "a".into(),
                input: vec![CLS, 5, 6, 7],
                target: vec![6, 7, EOS],
                bow: BowVector(vec![1, 2, 0, 0, 1]),
            },
            EncodedPair {
                id: "b".into(),
                input: vec![CLS, 8, 9, 5, 5],
                target: vec![9, EOS],
                bow: BowVector(vec![0, 0, 3, 1, 0]),
            },
        ]
    }

    /// Central-difference check of the joint loss over two micro documents
    /// with dropout masks and latent noise fixed by reseeding.
    pub fn gradcheck(config: ModelConfig, per_param: usize) -> GradCheckReport {
        let mut model = TaasModel::new(config).unwrap();
        let pairs = micro_pairs();
        let lambda = model.config.lambda;
        let tokens: usize = pairs.iter().map(|p| p.target.len()).sum();
        let noise = model.ntm.sample_noise(pairs.len(), &mut ChaCha8Rng::seed_from_u64(1));
        let mut store = std::mem::take(&mut model.store);
        let coords = sample_coords(&store, per_param, &mut ChaCha8Rng::seed_from_u64(2));
        check_gradients(
            &mut store,
            |s| {
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let mut g = Graph::new();
                let mut parts = Vec::new();
                for (i, pair) in pairs.iter().enumerate() {
                    let eps = taas_core::numeric::Matrix::row_vector(noise.row(i));
                    let mut dropout = Dropout::train(model.config.dropout, &mut rng);
                    let terms = model.document_graph(&mut g, s, pair, Some(&eps), &mut dropout)?;
                    parts.push(g.scale(terms.ntm.loss_sum, lambda / pairs.len() as f64));
                    parts.push(g.scale(terms.cross_entropy, (1.0 - lambda) / tokens as f64));
                }
                let mut loss = parts[0];
                for &p in &parts[1..] {
                    loss = g.add(loss, p)?;
                }
                Ok((g, loss))
            },
            &coords,
            1e-5,
        )
        .unwrap()
    }
}

pub mod corpus {
    use std::path::PathBuf;

    use taas_core::corpus::{read_jsonl, DocumentPair, Featurizer, StopWords, TopicVocabulary, Vocabulary};
    use taas_core::decoding::{greedy, DecodeConfig};
    use taas_core::seq2seq::{ConditionedDecoder, ModelConfig, TaasModel};

    pub fn fixture(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
    }

    pub fn load(name: &str) -> Vec<DocumentPair> {
        read_jsonl(&fixture(name)).unwrap()
    }

    pub fn featurizer(pairs: &[DocumentPair], max_len: usize, max_summary_len: usize) -> Featurizer {
        let vocab = Vocabulary::build(pairs, 5000, 1).unwrap();
        let topics = TopicVocabulary::build(pairs, &StopWords::english(), 2000, 1).unwrap();
        Featurizer::new(vocab, topics, max_len, max_summary_len).unwrap()
    }

    /// `base` with the vocabulary sizes and lengths of `f` filled in.
    pub fn sized(base: ModelConfig, f: &Featurizer) -> ModelConfig {
        ModelConfig {
            vocab_size: f.vocab.len(),
            topic_vocab_size: f.topic_vocab.len(),
            max_len: f.max_len,
            max_summary_len: f.max_summary_len,
            ..base
        }
    }

    pub fn greedy_summaries(model: &TaasModel, f: &Featurizer, pairs: &[DocumentPair], cfg: &DecodeConfig) -> Vec<String> {
        pairs
            .iter()
            .map(|p| {
                let input = f.encode_document(&p.document);
                let context = model.condition(&input, &vec![true; input.len()]).unwrap();
                let hyp = greedy(&ConditionedDecoder { model, context: &context }, cfg).unwrap();
                f.vocab.decode_text(hyp.tokens())
            })
            .collect()
    }
}
