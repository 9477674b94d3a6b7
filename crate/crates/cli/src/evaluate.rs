use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::Context;
use serde_json::Value;
use taas_core::corpus::DocumentPair;
use taas_core::evaluation::{lead3, sentence_count, DocumentScores, EvalReport, LengthBoundaries, RougeLMode};
use taas_core::TaasError;

use crate::error::CliError;

/// `(id, summary)` records from a JSONL file such as the output of
/// `summarize`. Numeric ids are accepted.
pub fn read_candidates(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| TaasError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(format!("malformed JSON: {e}")))?;
        let id = match value.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing `id`".into()).into()),
        };
        let summary = match value.get("summary") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(bad("missing string `summary`".into()).into()),
        };
        out.push((id, summary));
    }
    Ok(out)
}

pub fn lead3_candidates(references: &[DocumentPair]) -> Vec<(String, String)> {
    references.iter().map(|r| (r.id.clone(), lead3(&r.document))).collect()
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = ids.filter(|id| !seen.insert(*id)).map(str::to_string).collect();
    dups.dedup();
    dups
}

/// Scores every candidate against the reference with the same id; any id
/// present on only one side is an error listing all of them.
pub fn evaluate(
    candidates: &[(String, String)],
    references: &[DocumentPair],
    buckets: Option<LengthBoundaries>,
) -> anyhow::Result<EvalReport> {
    for (side, dups) in [
        ("--candidates", duplicates(candidates.iter().map(|c| c.0.as_str()))),
        ("--references", duplicates(references.iter().map(|r| r.id.as_str()))),
    ] {
        if !dups.is_empty() {
            return Err(CliError::Invalid {
                flag: side.into(),
                reason: format!("duplicate ids: {}", dups.join(", ")),
            }
            .into());
        }
    }
    let by_id: HashMap<&str, &DocumentPair> = references.iter().map(|r| (r.id.as_str(), r)).collect();
    let candidate_ids: HashSet<&str> = candidates.iter().map(|c| c.0.as_str()).collect();
    let mut unmatched: Vec<String> = candidates
        .iter()
        .filter(|c| !by_id.contains_key(c.0.as_str()))
        .map(|c| c.0.clone())
        .collect();
    unmatched.extend(
        references
            .iter()
            .filter(|r| !candidate_ids.contains(r.id.as_str()))
            .map(|r| r.id.clone()),
    );
    if !unmatched.is_empty() {
        return Err(CliError::UnmatchedIds(unmatched).into());
    }
    let documents = candidates
        .iter()
        .map(|(id, summary)| {
            let reference = by_id[id.as_str()];
            DocumentScores {
                source_sentences: Some(sentence_count(&reference.document)),
                ..DocumentScores::score(id, summary, &reference.summary, RougeLMode::Summary)
            }
        })
        .collect();
    let report = EvalReport::new(documents);
    Ok(match buckets {
        Some(b) => report.with_buckets(b),
        None => report,
    })
}
