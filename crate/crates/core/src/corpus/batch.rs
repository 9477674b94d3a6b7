use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::jsonl::DocumentPair;
use super::tokenize::tokenize;
use super::vocab::{BowVector, TopicVocabulary, Vocabulary, BOS, CLS, EOS, PAD};
use crate::error::{Result, TaasError};
use crate::numeric::Matrix;

/// Token-id views of one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub id: String,
    /// `CLS` followed by at most `max_len - 1` document tokens.
    pub input: Vec<usize>,
    /// At most `max_summary_len - 1` summary tokens followed by `EOS`.
    pub target: Vec<usize>,
    pub bow: BowVector,
}

/// Turns raw pairs into model inputs.
#[derive(Clone, Debug)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub topic_vocab: TopicVocabulary,
    pub max_len: usize,
    pub max_summary_len: usize,
}

impl Featurizer {
    pub fn new(vocab: Vocabulary, topic_vocab: TopicVocabulary, max_len: usize, max_summary_len: usize) -> Result<Self> {
        if max_len < 2 {
            return Err(TaasError::config("max_len", "must be at least 2 (CLS plus one token)"));
        }
        if max_summary_len < 1 {
            return Err(TaasError::config("max_summary_len", "must be at least 1"));
        }
        Ok(Featurizer {
            vocab,
            topic_vocab,
            max_len,
            max_summary_len,
        })
    }

    pub fn encode_document(&self, document: &str) -> Vec<usize> {
        let tokens = tokenize(document);
        let keep = tokens.len().min(self.max_len - 1);
        std::iter::once(CLS).chain(self.vocab.encode(&tokens[..keep])).collect()
    }

    pub fn encode_summary(&self, summary: &str) -> Vec<usize> {
        let tokens = tokenize(summary);
        let keep = tokens.len().min(self.max_summary_len - 1);
        self.vocab.encode(&tokens[..keep]).into_iter().chain(std::iter::once(EOS)).collect()
    }

    pub fn encode(&self, pair: &DocumentPair) -> EncodedPair {
        EncodedPair {
            id: pair.id.clone(),
            input: self.encode_document(&pair.document),
            target: self.encode_summary(&pair.summary),
            bow: self.topic_vocab.to_bow(&pair.document),
        }
    }

    pub fn encode_all(&self, pairs: &[DocumentPair]) -> Vec<EncodedPair> {
        pairs.iter().map(|p| self.encode(p)).collect()
    }
}

/// A padded mini-batch carrying the sequence and bag-of-words views.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `B x N` input ids, `PAD` beyond each sequence.
    pub inputs: Vec<Vec<usize>>,
    pub input_mask: Vec<Vec<bool>>,
    /// `B x M` target ids (summary then `EOS`), `PAD` beyond each sequence.
    pub targets: Vec<Vec<usize>>,
    pub target_mask: Vec<Vec<bool>>,
    /// `B x V_topics` word counts.
    pub bow: Matrix,
}

impl Batch {
    pub fn from_pairs(pairs: &[&EncodedPair]) -> Result<Self> {
        let n = pairs.iter().map(|p| p.input.len()).max().unwrap_or(0);
        let m = pairs.iter().map(|p| p.target.len()).max().unwrap_or(0);
        let (inputs, input_mask) = pad(pairs.iter().map(|p| p.input.as_slice()), n);
        let (targets, target_mask) = pad(pairs.iter().map(|p| p.target.as_slice()), m);
        let width = pairs.first().map_or(0, |p| p.bow.0.len());
        let rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.bow.as_f64()).collect();
        let bow = if rows.is_empty() {
            Matrix::zeros(0, width)
        } else {
            Matrix::from_rows(&rows)?
        };
        Ok(Batch {
            ids: pairs.iter().map(|p| p.id.clone()).collect(),
            inputs,
            input_mask,
            targets,
            target_mask,
            bow,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Teacher-forcing decoder input for row `i`: `BOS` followed by the
    /// target shifted right by one, padded like the target.
    pub fn decoder_input(&self, i: usize) -> Vec<usize> {
        let t = &self.targets[i];
        let mut out = Vec::with_capacity(t.len());
        out.push(BOS);
        out.extend_from_slice(&t[..t.len().saturating_sub(1)]);
        for (o, &keep) in out.iter_mut().zip(&self.target_mask[i]) {
            if !keep {
                *o = PAD;
            }
        }
        out
    }

    /// Number of non-PAD target tokens in the whole batch.
    pub fn target_tokens(&self) -> usize {
        self.target_mask.iter().flatten().filter(|&&m| m).count()
    }
}

fn pad<'a>(seqs: impl Iterator<Item = &'a [usize]>, width: usize) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    seqs.map(|s| {
        let mut ids = s.to_vec();
        ids.resize(width, PAD);
        let mask = (0..width).map(|i| i < s.len()).collect();
        (ids, mask)
    })
    .unzip()
}

/// Groups pairs into batches of `batch_size`, keeping the final partial
/// batch. With a seed the order is shuffled reproducibly first.
pub fn make_batches(pairs: &[EncodedPair], batch_size: usize, shuffle_seed: Option<u64>) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(TaasError::config("batch_size", "must be at least 1"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&EncodedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StopWords;

    fn featurizer(pairs: &[DocumentPair]) -> Featurizer {
        let vocab = Vocabulary::build(pairs, 100, 1).unwrap();
        let tv = TopicVocabulary::build(pairs, &StopWords::english(), 50, 1).unwrap();
        Featurizer::new(vocab, tv, 8, 4).unwrap()
    }

    fn corpus() -> Vec<DocumentPair> {
        vec![
            DocumentPair::new("a", "alpha beta gamma", "alpha"),
            DocumentPair::new("b", "delta epsilon zeta eta theta", "delta zeta"),
            DocumentPair::new("c", "iota kappa", "kappa"),
            DocumentPair::new("d", "lambda mu nu xi", "mu"),
            DocumentPair::new("e", "omicron pi", "pi pi pi pi pi pi"),
        ]
    }

    #[test]
    fn partial_final_batch_kept() {
        let pairs = corpus();
        let f = featurizer(&pairs);
        let batches = make_batches(&f.encode_all(&pairs), 2, None).unwrap();
        let sizes: Vec<_> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, [2, 2, 1]);
    }

    #[test]
    fn padding_and_masks_agree() {
        let pairs = vec![
            DocumentPair::new("a", "one two", "x"),
            DocumentPair::new("b", "one two three four", "y"),
        ];
        let f = featurizer(&pairs);
        let b = &make_batches(&f.encode_all(&pairs), 2, None).unwrap()[0];
        // CLS plus tokens: lengths 3 and 5.
        let sums: Vec<usize> = b.input_mask.iter().map(|m| m.iter().filter(|&&x| x).count()).collect();
        assert_eq!(sums, [3, 5]);
        assert!(b.inputs.iter().all(|r| r.len() == 5));
        assert_eq!(b.bow.rows(), 2);
    }

    #[test]
    fn same_seed_same_order() {
        let pairs = corpus();
        let f = featurizer(&pairs);
        let enc = f.encode_all(&pairs);
        let a = make_batches(&enc, 2, Some(9)).unwrap();
        let b = make_batches(&enc, 2, Some(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_limits() {
        let pairs = corpus();
        let f = featurizer(&pairs);
        let e = f.encode(&DocumentPair::new("z", "w w w w w w w w w w w w", "pi pi pi pi pi pi"));
        assert_eq!(e.input.len(), 8);
        assert_eq!(e.input[0], CLS);
        assert_eq!(e.target.len(), 4);
        assert_eq!(*e.target.last().unwrap(), EOS);
    }

    #[test]
    fn decoder_input_is_shifted_target() {
        let pairs = corpus();
        let f = featurizer(&pairs);
        let enc = f.encode_all(&pairs);
        let b = Batch::from_pairs(&[&enc[0], &enc[1]]).unwrap();
        let di = b.decoder_input(0);
        assert_eq!(di[0], BOS);
        assert_eq!(di[1], b.targets[0][0]);
        assert_eq!(di.len(), b.targets[0].len());
        assert_eq!(di[2], PAD);
    }
}
