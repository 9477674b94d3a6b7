use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taas_core::corpus::{read_jsonl, DocumentPair, Featurizer, StopWords, TopicVocabulary, Vocabulary};
use taas_core::seq2seq::{train, MetricsRow, TaasModel, TrainOutcome};
use taas_core::TaasError;

use crate::config::RunConfig;

pub const CHECKPOINT: &str = "model.ckpt";
pub const MODEL_CONFIG: &str = "config.json";
pub const RUN_CONFIG: &str = "run.json";
pub const VOCAB: &str = "vocab.txt";
pub const TOPIC_VOCAB: &str = "topic_vocab.txt";
pub const METRICS: &str = "metrics.csv";

pub struct Trained {
    pub outcome: TrainOutcome,
    pub featurizer: Featurizer,
    pub validation: Vec<DocumentPair>,
}

fn read_training_file(path: &Path, field: &str) -> anyhow::Result<Vec<DocumentPair>> {
    let pairs = read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(p) = pairs.iter().find(|p| p.inference_only) {
        return Err(TaasError::Config {
            field: field.to_string(),
            reason: format!("record `{}` has no summary", p.id),
        }
        .into());
    }
    Ok(pairs)
}

/// Seeded holdout of `fraction` of `pairs` (at least one pair on each side
/// when there are two or more); both parts keep file order.
pub fn split_holdout(pairs: Vec<DocumentPair>, fraction: f64, seed: u64) -> (Vec<DocumentPair>, Vec<DocumentPair>) {
    let n = pairs.len();
    if n < 2 {
        return (pairs, Vec::new());
    }
    let held = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_held = vec![false; n];
    for &i in &order[..held] {
        is_held[i] = true;
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (pair, held) in pairs.into_iter().zip(is_held) {
        if held {
            validation.push(pair);
        } else {
            train.push(pair);
        }
    }
    (train, validation)
}

/// Builds vocabularies, trains and writes every run artifact to the output
/// directory.
pub fn run_training(config: &RunConfig, log: bool) -> anyhow::Result<Trained> {
    config.validate()?;
    let dir = config.output_dir.clone().expect("validated");
    let all = read_training_file(config.train_path.as_deref().expect("validated"), "train_path")?;
    let (train_pairs, validation) = match &config.validation_path {
        Some(p) => (all, read_training_file(p, "validation_path")?),
        None => split_holdout(all, config.holdout_fraction, config.seed),
    };
    let stopwords = match &config.stopwords_path {
        Some(p) => StopWords::from_file(p)?,
        None => StopWords::english(),
    };
    let vocab = Vocabulary::build(&train_pairs, config.vocab_cap, config.vocab_min_count)?;
    let topic_vocab = TopicVocabulary::build(&train_pairs, &stopwords, config.topic_vocab_cap, config.topic_vocab_min_count)?;
    let featurizer = Featurizer::new(vocab, topic_vocab, config.max_len, config.max_summary_len)?;
    let model_config = config.model_config(featurizer.vocab.len(), featurizer.topic_vocab.len());
    let model = TaasModel::new(model_config)?;

    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(RUN_CONFIG), serde_json::to_string_pretty(config)? + "\n")?;
    featurizer.vocab.save(&dir.join(VOCAB))?;
    featurizer.topic_vocab.save(&dir.join(TOPIC_VOCAB))?;

    if log {
        eprintln!(
            "seed {}: {} training pairs, {} validation pairs, vocabulary {}, topic vocabulary {}",
            config.seed,
            train_pairs.len(),
            validation.len(),
            featurizer.vocab.len(),
            featurizer.topic_vocab.len()
        );
    }
    let mut metrics = BufWriter::new(File::create(dir.join(METRICS))?);
    writeln!(metrics, "{}", MetricsRow::CSV_HEADER)?;
    let mut write_error = None;
    let outcome = train(
        model,
        &config.train_config(),
        &featurizer.encode_all(&train_pairs),
        &featurizer.encode_all(&validation),
        |row| {
            let line = row.csv_line();
            if log {
                eprintln!("{line}");
            }
            if let Err(e) = writeln!(metrics, "{line}").and_then(|_| metrics.flush()) {
                write_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    outcome.model.save(&dir.join(CHECKPOINT), &dir.join(MODEL_CONFIG))?;
    if log {
        eprintln!("best epoch {}; artifacts in {}", outcome.best_epoch, dir.display());
    }
    Ok(Trained {
        outcome,
        featurizer,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize) -> Vec<DocumentPair> {
        (0..n).map(|i| DocumentPair::new(i.to_string(), "d", "s")).collect()
    }

    #[test]
    fn holdout_is_seeded_and_ordered() {
        let (t, v) = split_holdout(pairs(20), 0.1, 3);
        assert_eq!((t.len(), v.len()), (18, 2));
        let (t2, v2) = split_holdout(pairs(20), 0.1, 3);
        assert_eq!((t, v.clone()), (t2, v2));
        assert!(v
            .windows(2)
            .all(|w| w[0].id.parse::<usize>().unwrap() < w[1].id.parse::<usize>().unwrap()));
    }

    #[test]
    fn holdout_keeps_both_sides_nonempty() {
        assert_eq!(split_holdout(pairs(3), 0.1, 0).1.len(), 1);
        assert_eq!(split_holdout(pairs(2), 0.9, 0).0.len(), 1);
        assert!(split_holdout(pairs(1), 0.1, 0).1.is_empty());
    }
}
