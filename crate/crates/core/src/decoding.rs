//! Greedy and beam-search generation over any next-token model.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{BOS, EOS};
use crate::error::{Result, TaasError};

/// A conditional next-token distribution.
pub trait StepModel {
    fn vocab_size(&self) -> usize;

    /// Natural-log probabilities of every token following `prefix` (which
    /// starts with `BOS`). `-inf` marks impossible tokens.
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// Wraps a closure as a [`StepModel`].
pub struct FnModel<F> {
    pub vocab_size: usize,
    pub f: F,
}

impl<F: Fn(&[usize]) -> Vec<f64>> StepModel for FnModel<F> {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok((self.f)(prefix))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Most generated tokens, `EOS` included.
    pub max_summary_len: usize,
    pub length_norm_exponent: f64,
    /// `EOS` is suppressed until this many tokens have been generated.
    pub min_len: usize,
    pub block_trigrams: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 4,
            max_summary_len: 64,
            length_norm_exponent: 1.0,
            min_len: 5,
            block_trigrams: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(TaasError::config("beam_size", "must be at least 1"));
        }
        if self.max_summary_len == 0 {
            return Err(TaasError::config("max_summary_len", "must be at least 1"));
        }
        if self.min_len > self.max_summary_len {
            return Err(TaasError::config(
                "min_len",
                format!("{} exceeds max_summary_len {}", self.min_len, self.max_summary_len),
            ));
        }
        if !(self.length_norm_exponent >= 0.0 && self.length_norm_exponent.is_finite()) {
            return Err(TaasError::config("length_norm_exponent", "must be a finite non-negative number"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis {
    /// `BOS` followed by the generated tokens.
    pub ids: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    /// `log_prob / generated_len ^ exponent`.
    pub score: f64,
}

impl BeamHypothesis {
    /// Generated tokens, `EOS` included.
    pub fn generated_len(&self) -> usize {
        self.ids.len() - 1
    }

    /// Generated tokens without `BOS` and a trailing `EOS`.
    pub fn tokens(&self) -> &[usize] {
        let body = &self.ids[1..];
        body.strip_suffix(&[EOS]).unwrap_or(body)
    }
}

/// `log_prob / len^exponent`.
pub fn normalized_score(log_prob: f64, len: usize, exponent: f64) -> f64 {
    if exponent == 0.0 {
        log_prob
    } else {
        log_prob / (len.max(1) as f64).powf(exponent)
    }
}

fn step_log_probs<M: StepModel + ?Sized>(model: &M, ids: &[usize], cfg: &DecodeConfig) -> Result<Vec<f64>> {
    let mut lp = model.next_log_probs(ids)?;
    if lp.len() != model.vocab_size() {
        return Err(TaasError::dims("next_log_probs", (1, lp.len()), (1, model.vocab_size())));
    }
    let generated = ids.len() - 1;
    if generated < cfg.min_len && EOS < lp.len() {
        lp[EOS] = f64::NEG_INFINITY;
    }
    if cfg.block_trigrams && ids.len() >= 3 {
        let body = &ids[1..];
        if body.len() >= 2 {
            let (a, b) = (body[body.len() - 2], body[body.len() - 1]);
            for w in body.windows(3) {
                if w[0] == a && w[1] == b && w[2] < lp.len() {
                    lp[w[2]] = f64::NEG_INFINITY;
                }
            }
        }
    }
    Ok(lp)
}

fn finish(mut ids: Vec<usize>, log_prob: f64, cfg: &DecodeConfig) -> BeamHypothesis {
    let finished = ids.last() == Some(&EOS) || ids.len() > cfg.max_summary_len;
    if ids.is_empty() {
        ids.push(BOS);
    }
    let score = normalized_score(log_prob, ids.len() - 1, cfg.length_norm_exponent);
    BeamHypothesis {
        ids,
        log_prob,
        finished,
        score,
    }
}

/// Repeatedly appends the most probable token (lowest id on ties) until
/// `EOS` or the length limit. Only `beam_size` is ignored.
pub fn greedy<M: StepModel + ?Sized>(model: &M, cfg: &DecodeConfig) -> Result<BeamHypothesis> {
    cfg.validate()?;
    let mut ids = vec![BOS];
    let mut log_prob = 0.0;
    while ids.len() - 1 < cfg.max_summary_len {
        let lp = step_log_probs(model, &ids, cfg)?;
        let best = lp
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .fold(None, |best: Option<(usize, f64)>, (t, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((t, v)),
            });
        let Some((token, value)) = best else { break };
        ids.push(token);
        log_prob += value;
        if token == EOS {
            break;
        }
    }
    Ok(finish(ids, log_prob, cfg))
}

struct Candidate {
    parent: usize,
    token: usize,
    log_prob: f64,
}

fn by_rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.token.cmp(&b.token))
        .then(a.parent.cmp(&b.parent))
}

/// Beam search. Each step expands every live hypothesis by its `beam_size`
/// best tokens and keeps the global `beam_size` best by running
/// log-probability; hypotheses ending in `EOS` or reaching the length limit
/// leave the beam. The greedy hypothesis joins the final pool, so the top
/// result never scores below it. Results are sorted by normalized score,
/// best first.
pub fn beam_search<M: StepModel + ?Sized>(model: &M, cfg: &DecodeConfig) -> Result<Vec<BeamHypothesis>> {
    cfg.validate()?;
    let mut live: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
    let mut done: Vec<BeamHypothesis> = Vec::new();
    while !live.is_empty() {
        let mut candidates = Vec::new();
        for (parent, (ids, log_prob)) in live.iter().enumerate() {
            let lp = step_log_probs(model, ids, cfg)?;
            let mut options: Vec<Candidate> = lp
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(token, v)| Candidate {
                    parent,
                    token,
                    log_prob: log_prob + v,
                })
                .collect();
            options.sort_by(by_rank);
            options.truncate(cfg.beam_size);
            candidates.extend(options);
        }
        candidates.sort_by(by_rank);
        candidates.truncate(cfg.beam_size);
        let mut next = Vec::with_capacity(candidates.len());
        for c in candidates {
            let mut ids = live[c.parent].0.clone();
            ids.push(c.token);
            let hyp = finish(ids, c.log_prob, cfg);
            if hyp.finished {
                done.push(hyp);
            } else {
                next.push((hyp.ids, hyp.log_prob));
            }
        }
        live = next;
    }
    let greedy = greedy(model, cfg)?;
    if !done.iter().any(|h| h.ids == greedy.ids) {
        done.push(greedy);
    }
    done.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.ids.cmp(&b.ids)));
    Ok(done)
}
