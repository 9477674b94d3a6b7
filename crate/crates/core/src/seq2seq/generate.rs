use super::model::{DocumentContext, TaasModel};
use crate::corpus::{BOS, CLS, PAD};
use crate::decoding::{beam_search, BeamHypothesis, DecodeConfig, StepModel};
use crate::error::Result;

/// The decoder bound to one encoded document. `PAD`, `BOS` and `CLS` are
/// never generated.
pub struct ConditionedDecoder<'a> {
    pub model: &'a TaasModel,
    pub context: &'a DocumentContext,
}

impl StepModel for ConditionedDecoder<'_> {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut logits = self.model.decode_step(prefix, &self.context.encoder, &self.context.pooled)?;
        for banned in [PAD, BOS, CLS] {
            if let Some(l) = logits.get_mut(banned) {
                *l = f64::NEG_INFINITY;
            }
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_total = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(logits.into_iter().map(|l| l - log_total).collect())
    }
}

/// Summary of one document: the ranked hypotheses plus the attention context
/// they were decoded from.
#[derive(Clone, Debug)]
pub struct Generated {
    pub hypotheses: Vec<BeamHypothesis>,
    pub context: DocumentContext,
}

impl TaasModel {
    /// Encodes `input` (`CLS`-prefixed ids, no padding) and beam-decodes it.
    pub fn generate(&self, input: &[usize], cfg: &DecodeConfig) -> Result<Generated> {
        let context = self.condition(input, &vec![true; input.len()])?;
        let hypotheses = beam_search(
            &ConditionedDecoder {
                model: self,
                context: &context,
            },
            cfg,
        )?;
        Ok(Generated { hypotheses, context })
    }
}
