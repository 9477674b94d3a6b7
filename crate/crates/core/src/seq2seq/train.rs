use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::layers::Dropout;
use super::model::{LossBreakdown, TaasModel};
use crate::corpus::EncodedPair;
use crate::error::{Result, TaasError};
use crate::ntm::train_ntm;
use crate::numeric::{AdamConfig, Graph, Matrix, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    /// 1-based.
    pub epoch: usize,
    pub split: Split,
    pub losses: LossBreakdown,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "epoch,split,l_ntm,l_sum,combined";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.split.as_str(),
            self.losses.l_ntm,
            self.losses.l_sum,
            self.losses.combined
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss (training
    /// loss when there is no validation set).
    pub model: TaasModel,
    pub metrics: Vec<MetricsRow>,
    pub best_epoch: usize,
    /// Mean topic-model loss of each pretraining epoch.
    pub ntm_history: Vec<f64>,
}

/// Runs one optimization step on `batch` and returns its losses.
///
/// Each document gets its own graph. Gradients accumulate across documents
/// with weights chosen so that the total equals the gradient of
/// `λ·mean_d(L_NTM) + (1−λ)·Σ CE / Σ tokens` over the batch.
pub fn train_step(model: &mut TaasModel, batch: &[&EncodedPair], adam: &AdamConfig, rng: &mut ChaCha8Rng) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(TaasError::EmptyCorpus("empty batch".into()));
    }
    let lambda = model.config.lambda;
    let docs = batch.len() as f64;
    let tokens: usize = batch.iter().map(|p| p.target.len()).sum();
    let mut store = std::mem::take(&mut model.store);
    let result = (|| {
        let mut ntm_total = 0.0;
        let mut ce_total = 0.0;
        for pair in batch {
            let noise = model.ntm.sample_noise(1, rng);
            let mut g = Graph::new();
            let mut dropout = Dropout::train(model.config.dropout, rng as &mut dyn RngCore);
            let terms = model.document_graph(&mut g, &store, pair, Some(&noise), &mut dropout)?;
            let ntm_part = g.scale(terms.ntm.loss_sum, lambda / docs);
            let sum_part = g.scale(terms.cross_entropy, (1.0 - lambda) / tokens as f64);
            let loss = g.add(ntm_part, sum_part)?;
            ntm_total += g.scalar(terms.ntm.loss_sum);
            ce_total += g.scalar(terms.cross_entropy);
            g.backward(loss, &mut store)?;
        }
        Ok(LossBreakdown::new(lambda, ntm_total / docs, ce_total / tokens as f64))
    })();
    if let Ok(losses) = &result {
        if losses.combined.is_finite() {
            store.adam_step_all(adam);
        } else {
            store.zero_grad();
        }
    } else {
        store.zero_grad();
    }
    model.store = store;
    result
}

/// Optional topic-model pretraining followed by the joint epoch loop.
///
/// `on_row` sees every metrics row as soon as it is produced.
pub fn train(
    mut model: TaasModel,
    config: &TrainConfig,
    train_pairs: &[EncodedPair],
    validation: &[EncodedPair],
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(TaasError::EmptyCorpus("no training pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);

    let mut ntm_history = Vec::new();
    if config.ntm_pretrain_epochs > 0 {
        let rows: Vec<Vec<f64>> = train_pairs.iter().map(|p| p.bow.as_f64()).collect();
        let bows = Matrix::from_rows(&rows)?;
        let ntm = model.ntm.clone();
        ntm_history = train_ntm(
            &ntm,
            &mut model.store,
            &bows,
            config.ntm_pretrain_epochs,
            config.batch_size,
            &AdamConfig::with_learning_rate(config.ntm_learning_rate),
            &mut rng,
        )?;
    }
    model.set_ntm_frozen(config.freeze_ntm);
    model.set_encoder_frozen(model.config.freeze_encoder);

    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        let mut ntm_sum = 0.0;
        let mut ce_sum = 0.0;
        let mut tokens = 0usize;
        for (index, chunk) in batches.iter().enumerate() {
            let pairs: Vec<&EncodedPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            let losses = train_step(&mut model, &pairs, &config.adam, &mut rng)?;
            if !losses.combined.is_finite() {
                return Err(TaasError::Divergence {
                    epoch,
                    batch: index,
                    what: "combined loss",
                });
            }
            let batch_tokens: usize = pairs.iter().map(|p| p.target.len()).sum();
            ntm_sum += losses.l_ntm * pairs.len() as f64;
            ce_sum += losses.l_sum * batch_tokens as f64;
            tokens += batch_tokens;
        }
        let train_losses = LossBreakdown::new(model.config.lambda, ntm_sum / train_pairs.len() as f64, ce_sum / tokens as f64);
        let row = MetricsRow {
            epoch,
            split: Split::Train,
            losses: train_losses,
        };
        on_row(&row);
        metrics.push(row);

        let selection = if validation.is_empty() {
            train_losses.combined
        } else {
            let losses = model.summarization_loss(validation)?;
            let row = MetricsRow {
                epoch,
                split: Split::Validation,
                losses,
            };
            on_row(&row);
            metrics.push(row);
            losses.combined
        };
        if !selection.is_finite() {
            return Err(TaasError::Divergence {
                epoch,
                batch: batches.len(),
                what: "validation loss",
            });
        }
        if best.as_ref().is_none_or(|(b, _, _)| selection < *b) {
            best = Some((selection, epoch, model.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, store) = best.expect("at least one epoch ran");
    model.store = store;
    Ok(TrainOutcome {
        model,
        metrics,
        best_epoch,
        ntm_history,
    })
}
