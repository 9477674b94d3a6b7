use std::fmt::Write as _;
use std::path::PathBuf;

use taas_core::ntm::NeuralTopicModel;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::evaluate::evaluate;
use crate::summarize::{summarize, LoadedRun};
use crate::train::run_training;

/// One line per topic: its index, then the `n` most probable words, all
/// tab-separated.
pub fn topic_lines(run: &LoadedRun, n: usize) -> Vec<String> {
    let beta = run.model.ntm.beta(&run.model.store);
    (0..beta.rows())
        .map(|k| {
            let mut line = k.to_string();
            for (w, _) in NeuralTopicModel::top_words(&beta, k, n) {
                let _ = write!(line, "\t{}", run.featurizer.topic_vocab.word(w).unwrap_or_default());
            }
            line
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "num_topics,best_epoch,rouge1,rouge2,rouge_l";

/// Retrains once per topic count (into `k<K>` under the configured output
/// directory) and scores each run on its validation pairs.
pub fn sweep(base: &RunConfig, counts: &[usize], log: bool) -> anyhow::Result<String> {
    let root: PathBuf = base.output_dir.clone().ok_or_else(|| CliError::Invalid {
        flag: "output_dir".into(),
        reason: "is required for a sweep".into(),
    })?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    for &k in counts {
        let config = RunConfig {
            num_topics: k,
            output_dir: Some(root.join(format!("k{k}"))),
            ..base.clone()
        };
        let trained = run_training(&config, log)?;
        if trained.validation.is_empty() {
            return Err(CliError::Invalid {
                flag: "--sweep".into(),
                reason: "needs at least one validation pair".into(),
            }
            .into());
        }
        let run = LoadedRun {
            model: trained.outcome.model,
            featurizer: trained.featurizer,
            run: Some(config.clone()),
        };
        let outputs = summarize(&run, &trained.validation, &config.decode_config())?;
        let candidates: Vec<(String, String)> = outputs.into_iter().map(|(s, _)| (s.id, s.summary)).collect();
        let report = evaluate(&candidates, &trained.validation, None)?;
        let m = report.mean;
        let _ = writeln!(
            csv,
            "{k},{},{:.6},{:.6},{:.6}",
            trained.outcome.best_epoch, m.rouge1, m.rouge2, m.rouge_l
        );
        if log {
            eprintln!("K={k}: ROUGE-L F1 {:.4}", m.rouge_l);
        }
    }
    Ok(csv)
}
