use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use taas_core::corpus::{DocumentPair, Featurizer, TopicVocabulary, Vocabulary, NUM_SPECIAL};
use taas_core::decoding::DecodeConfig;
use taas_core::seq2seq::TaasModel;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::train::{CHECKPOINT, MODEL_CONFIG, RUN_CONFIG, TOPIC_VOCAB, VOCAB};

/// A trained model with the vocabularies it was built on.
pub struct LoadedRun {
    pub model: TaasModel,
    pub featurizer: Featurizer,
    pub run: Option<RunConfig>,
}

fn require(dir: &Path, name: &str) -> anyhow::Result<std::path::PathBuf> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(CliError::Invalid {
            flag: "--run".into(),
            reason: format!("{} is missing", path.display()),
        }
        .into());
    }
    Ok(path)
}

impl LoadedRun {
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        let model = TaasModel::load(&require(dir, CHECKPOINT)?, &require(dir, MODEL_CONFIG)?)
            .with_context(|| format!("loading the model in {}", dir.display()))?;
        let vocab = Vocabulary::load(&require(dir, VOCAB)?)?;
        let topic_vocab = TopicVocabulary::load(&require(dir, TOPIC_VOCAB)?)?;
        for (file, found, expected) in [
            (VOCAB, vocab.len(), model.config.vocab_size),
            (TOPIC_VOCAB, topic_vocab.len(), model.config.topic_vocab_size),
        ] {
            if found != expected {
                return Err(CliError::Invalid {
                    flag: "--run".into(),
                    reason: format!("{file} has {found} entries but the checkpoint was built for {expected}"),
                }
                .into());
            }
        }
        let run = match dir.join(RUN_CONFIG) {
            p if p.is_file() => {
                Some(serde_json::from_str(&std::fs::read_to_string(&p)?).with_context(|| format!("reading {}", p.display()))?)
            }
            _ => None,
        };
        let featurizer = Featurizer::new(vocab, topic_vocab, model.config.max_len, model.config.max_summary_len)?;
        Ok(LoadedRun { model, featurizer, run })
    }

    /// Decoding settings saved with the run, or the defaults.
    pub fn decode_config(&self) -> DecodeConfig {
        self.run.as_ref().map(RunConfig::decode_config).unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub id: String,
    pub summary: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttendedToken {
    pub position: usize,
    pub token: String,
    pub weight: f64,
}

/// Topic attention over one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub alpha_hat: Vec<f64>,
    /// The five highest-weighted non-special tokens, heaviest first.
    pub top: Vec<AttendedToken>,
}

pub fn top_attended(ids: &[usize], tokens: &[String], alpha_hat: &[f64], k: usize) -> Vec<AttendedToken> {
    let mut ranked: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] >= NUM_SPECIAL).collect();
    ranked.sort_by(|&a, &b| alpha_hat[b].total_cmp(&alpha_hat[a]).then(a.cmp(&b)));
    ranked
        .into_iter()
        .take(k)
        .map(|i| AttendedToken {
            position: i,
            token: tokens[i].clone(),
            weight: alpha_hat[i],
        })
        .collect()
}

pub fn summarize(run: &LoadedRun, pairs: &[DocumentPair], cfg: &DecodeConfig) -> anyhow::Result<Vec<(SummaryRecord, AttentionRecord)>> {
    cfg.validate()?;
    pairs
        .iter()
        .map(|pair| {
            let input = run.featurizer.encode_document(&pair.document);
            let generated = run
                .model
                .generate(&input, cfg)
                .with_context(|| format!("summarizing `{}`", pair.id))?;
            let best = &generated.hypotheses[0];
            let tokens: Vec<String> = input
                .iter()
                .map(|&id| run.featurizer.vocab.token(id).unwrap_or_default().to_string())
                .collect();
            let alpha_hat = generated.context.attention.alpha_hat;
            Ok((
                SummaryRecord {
                    id: pair.id.clone(),
                    summary: run.featurizer.vocab.decode_text(best.tokens()),
                    score: best.score,
                },
                AttentionRecord {
                    id: pair.id.clone(),
                    top: top_attended(&input, &tokens, &alpha_hat, 5),
                    tokens,
                    alpha_hat,
                },
            ))
        })
        .collect()
}
