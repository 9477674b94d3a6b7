//! ROUGE-1/2/L, the Lead-3 baseline and sentence-count length buckets.
//!
//! Texts go through the corpus tokenizer (lowercased word tokens). Tokens
//! without any alphanumeric character are dropped before counting but still
//! end sentences. No stemming, no stopword removal.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, is_sentence_end, tokenize};
use crate::error::{Result, TaasError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(hits: usize, candidate: usize, reference: usize) -> Self {
        let ratio = |d: usize| if d == 0 { 0.0 } else { hits as f64 / d as f64 };
        let (precision, recall) = (ratio(candidate), ratio(reference));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

/// Sentences of scoring tokens. A sentence ends after `.`, `!` or `?`;
/// sentences left empty after dropping punctuation are skipped.
pub fn token_sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for token in tokenize(text) {
        let end = is_sentence_end(&token);
        if !is_punctuation(&token) {
            current.push(token);
        }
        if end && !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Scoring tokens of `text` in order.
pub fn scoring_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !is_punctuation(t)).collect()
}

/// Raw-text sentences under the same rule as [`token_sentences`], trimmed
/// and otherwise verbatim.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            pieces.push(&text[start..end]);
            start = end;
        }
    }
    pieces.push(&text[start..]);
    pieces
        .into_iter()
        .map(str::trim)
        .filter(|p| p.chars().any(char::is_alphanumeric))
        .collect()
}

pub fn sentence_count(text: &str) -> usize {
    split_sentences(text).len()
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap on pre-tokenized input.
pub fn rouge_n_tokens<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> RougeScore {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let hits = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_counts(hits, c.values().sum(), r.values().sum())
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    rouge_n_tokens(&scoring_tokens(candidate), &scoring_tokens(reference), n)
}

fn lcs_table<S: AsRef<str>>(a: &[S], b: &[S]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1].as_ref() == b[j - 1].as_ref() {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    lcs_table(a, b)[a.len()][b.len()]
}

/// Indices into `a` of one longest common subsequence with `b`.
fn lcs_indices<S: AsRef<str>>(a: &[S], b: &[S]) -> Vec<usize> {
    let t = lcs_table(a, b);
    let (mut i, mut j) = (a.len(), b.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if a[i - 1].as_ref() == b[j - 1].as_ref() {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i - 1][j] >= t[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out.reverse();
    out
}

/// Which LCS statistic ROUGE-L uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeLMode {
    /// Union-LCS of every reference sentence against the candidate
    /// sentences, clipped by token counts.
    #[default]
    Summary,
    /// One LCS between the two texts taken as single sequences.
    WholeText,
}

/// Summary-level union-LCS on pre-split sentences.
pub fn rouge_l_sentences<S: AsRef<str>>(candidate: &[Vec<S>], reference: &[Vec<S>]) -> RougeScore {
    let cand_len: usize = candidate.iter().map(Vec::len).sum();
    let ref_len: usize = reference.iter().map(Vec::len).sum();
    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    for t in candidate.iter().flatten() {
        *cand_left.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for t in reference.iter().flatten() {
        *ref_left.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut hits = 0;
    for r in reference {
        let mut union: Vec<usize> = candidate.iter().flat_map(|c| lcs_indices(r, c)).collect();
        union.sort_unstable();
        union.dedup();
        for i in union {
            let token = r[i].as_ref();
            let (Some(c), Some(rr)) = (cand_left.get_mut(token), ref_left.get_mut(token)) else {
                continue;
            };
            if *c > 0 && *rr > 0 {
                *c -= 1;
                *rr -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::from_counts(hits, cand_len, ref_len)
}

pub fn rouge_l_with(candidate: &str, reference: &str, mode: RougeLMode) -> RougeScore {
    match mode {
        RougeLMode::Summary => rouge_l_sentences(&token_sentences(candidate), &token_sentences(reference)),
        RougeLMode::WholeText => {
            let (c, r) = (scoring_tokens(candidate), scoring_tokens(reference));
            RougeScore::from_counts(lcs_len(&c, &r), c.len(), r.len())
        }
    }
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    rouge_l_with(candidate, reference, RougeLMode::Summary)
}

/// The first three sentences of `document`, joined by single spaces.
pub fn lead3(document: &str) -> String {
    split_sentences(document).into_iter().take(3).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthBucket {
    Short,
    Medium,
    Long,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [LengthBucket::Short, LengthBucket::Medium, LengthBucket::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            LengthBucket::Short => "short",
            LengthBucket::Medium => "medium",
            LengthBucket::Long => "long",
        }
    }
}

/// Sentence-count boundaries: short is `< lower`, medium is
/// `lower..=upper`, long is `> upper`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBoundaries {
    pub lower: usize,
    pub upper: usize,
}

impl Default for LengthBoundaries {
    fn default() -> Self {
        LengthBoundaries { lower: 19, upper: 30 }
    }
}

impl LengthBoundaries {
    pub fn new(lower: usize, upper: usize) -> Result<Self> {
        if lower > upper {
            return Err(TaasError::config(
                "buckets",
                format!("lower bound {lower} exceeds upper bound {upper}"),
            ));
        }
        Ok(LengthBoundaries { lower, upper })
    }

    pub fn bucket(&self, sentences: usize) -> LengthBucket {
        if sentences < self.lower {
            LengthBucket::Short
        } else if sentences <= self.upper {
            LengthBucket::Medium
        } else {
            LengthBucket::Long
        }
    }
}

impl std::str::FromStr for LengthBoundaries {
    type Err = TaasError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || TaasError::config("buckets", format!("expected two comma-separated counts, got {s:?}"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let lower = a.trim().parse().map_err(|_| bad())?;
        let upper = b.trim().parse().map_err(|_| bad())?;
        LengthBoundaries::new(lower, upper)
    }
}

/// Splits `items` into short, medium and long sub-corpora by the sentence
/// count of `text(item)`.
pub fn bucket_by_length<T>(items: &[T], text: impl Fn(&T) -> &str, bounds: LengthBoundaries) -> [(LengthBucket, Vec<&T>); 3] {
    let mut out = LengthBucket::ALL.map(|b| (b, Vec::new()));
    for item in items {
        let b = bounds.bucket(sentence_count(text(item)));
        out[b as usize].1.push(item);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentScores {
    pub id: String,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    /// Sentence count of the source document, when known.
    pub source_sentences: Option<usize>,
}

impl DocumentScores {
    pub fn score(id: &str, candidate: &str, reference: &str, mode: RougeLMode) -> Self {
        DocumentScores {
            id: id.to_string(),
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l_with(candidate, reference, mode),
            source_sentences: None,
        }
    }
}

/// Mean F1 of the three metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanF1 {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl MeanF1 {
    pub fn of<'a>(docs: impl IntoIterator<Item = &'a DocumentScores>) -> Self {
        let mut m = MeanF1::default();
        let mut n = 0usize;
        for d in docs {
            m.rouge1 += d.rouge1.f1;
            m.rouge2 += d.rouge2.f1;
            m.rouge_l += d.rouge_l.f1;
            n += 1;
        }
        if n > 0 {
            let k = n as f64;
            m.rouge1 /= k;
            m.rouge2 /= k;
            m.rouge_l /= k;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: LengthBucket,
    pub count: usize,
    pub mean: MeanF1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: Vec<DocumentScores>,
    pub mean: MeanF1,
    pub buckets: Option<Vec<BucketSummary>>,
}

impl EvalReport {
    pub fn new(documents: Vec<DocumentScores>) -> Self {
        let mean = MeanF1::of(&documents);
        EvalReport {
            documents,
            mean,
            buckets: None,
        }
    }

    /// Adds per-bucket means; documents without a source sentence count are
    /// left out of every bucket.
    pub fn with_buckets(mut self, bounds: LengthBoundaries) -> Self {
        let summaries = LengthBucket::ALL
            .iter()
            .map(|&bucket| {
                let members: Vec<&DocumentScores> = self
                    .documents
                    .iter()
                    .filter(|d| d.source_sentences.map(|s| bounds.bucket(s)) == Some(bucket))
                    .collect();
                BucketSummary {
                    bucket,
                    count: members.len(),
                    mean: MeanF1::of(members),
                }
            })
            .collect();
        self.buckets = Some(summaries);
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,rouge1_p,rouge1_r,rouge1_f1,rouge2_p,rouge2_r,rouge2_f1,rougeL_p,rougeL_r,rougeL_f1\n");
        for d in &self.documents {
            let id = if d.id.contains([',', '"', '\n']) {
                format!("\"{}\"", d.id.replace('"', "\"\""))
            } else {
                d.id.clone()
            };
            let _ = write!(out, "{id}");
            for s in [d.rouge1, d.rouge2, d.rouge_l] {
                let _ = write!(out, ",{:.6},{:.6},{:.6}", s.precision, s.recall, s.f1);
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable table of mean F1 (as percentages).
    pub fn summary_table(&self, label: &str) -> String {
        let width = label.len().max(5);
        let mut out = format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", "Model", "ROUGE-1", "ROUGE-2", "ROUGE-L");
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}",
            label,
            100.0 * self.mean.rouge1,
            100.0 * self.mean.rouge2,
            100.0 * self.mean.rouge_l
        );
        if let Some(buckets) = &self.buckets {
            let _ = writeln!(
                out,
                "\n{:<8}  {:>5}  {:>7}  {:>7}  {:>7}",
                "bucket", "docs", "ROUGE-1", "ROUGE-2", "ROUGE-L"
            );
            for b in buckets {
                let _ = writeln!(
                    out,
                    "{:<8}  {:>5}  {:>7.2}  {:>7.2}  {:>7.2}",
                    b.bucket.as_str(),
                    b.count,
                    100.0 * b.mean.rouge1,
                    100.0 * b.mean.rouge2,
                    100.0 * b.mean.rouge_l
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn rouge_n_examples() {
        let s = rouge_n("the cat sat", "the cat sat", 1);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_n("a b c", "d e f", 1), RougeScore::default());
        let s = rouge_n("the cat sat", "the cat ate", 1);
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 2.0 / 3.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        // Clipping: candidate repeats "the" more often than the reference.
        let s = rouge_n("the the the", "the cat", 1);
        assert_eq!(s.precision, 1.0 / 3.0);
        assert_eq!(s.recall, 0.5);
        assert_eq!(rouge_n("", "the cat", 1).f1, 0.0);
        assert_eq!(rouge_n("the", "the", 2).f1, 0.0);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l("a b c d", "a b c d").f1, 1.0);
        let s = rouge_l("a b c d", "a c b d");
        assert_eq!((s.precision, s.recall), (0.75, 0.75));
        assert_eq!(rouge_l("", "a b").f1, 0.0);
        assert_eq!(rouge_l("a b", "").f1, 0.0);
    }

    #[test]
    fn union_lcs_matches_the_textbook_example() {
        // Reference "w1 w2 w3 w4 w5"; candidate sentences "w1 w2 w6 w7 w8"
        // and "w1 w3 w8 w9 w5": union LCS is w1 w2 w3 w5.
        let reference = vec![words("w1 w2 w3 w4 w5")];
        let candidate = vec![words("w1 w2 w6 w7 w8"), words("w1 w3 w8 w9 w5")];
        let s = rouge_l_sentences(&candidate, &reference);
        assert_eq!(s.recall, 4.0 / 5.0);
        assert_eq!(s.precision, 4.0 / 10.0);
        let swapped = "w1 w3 w8 w9 w5. w1 w2 w6 w7 w8.";
        assert_eq!(rouge_l(swapped, "w1 w2 w3 w4 w5.").recall, 4.0 / 5.0);
        let whole = rouge_l_with(swapped, "w1 w2 w3 w4 w5.", RougeLMode::WholeText);
        assert_eq!(whole.recall, 3.0 / 5.0);
    }

    #[test]
    fn union_hits_are_clipped() {
        // The same candidate token cannot be credited to two reference sentences.
        let candidate = vec![words("a")];
        let reference = vec![words("a"), words("a")];
        let s = rouge_l_sentences(&candidate, &reference);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn sentence_splitting() {
        let text = "First one. Second! Third? Fourth. Fifth.";
        assert_eq!(split_sentences(text), ["First one.", "Second!", "Third?", "Fourth.", "Fifth."]);
        assert_eq!(token_sentences(text).len(), 5);
        assert_eq!(split_sentences("no terminal"), ["no terminal"]);
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("Wait?! Yes."), ["Wait?", "Yes."]);
        for text in ["A b. C d! E f", "x...y. z", "One. . Two"] {
            let raw = split_sentences(text);
            let tok = token_sentences(text);
            assert_eq!(raw.len(), tok.len(), "{text}");
            for (r, t) in raw.iter().zip(&tok) {
                assert_eq!(&scoring_tokens(r), t);
            }
        }
    }

    #[test]
    fn lead3_examples() {
        assert_eq!(lead3("A one. B two. C three. D four. E five."), "A one. B two. C three.");
        assert_eq!(lead3("Only. Two!"), "Only. Two!");
        assert_eq!(lead3(""), "");
    }

    #[test]
    fn bucket_boundaries() {
        let b = LengthBoundaries::default();
        assert_eq!(b.bucket(18), LengthBucket::Short);
        assert_eq!(b.bucket(19), LengthBucket::Medium);
        assert_eq!(b.bucket(30), LengthBucket::Medium);
        assert_eq!(b.bucket(31), LengthBucket::Long);
        assert_eq!("19,30".parse::<LengthBoundaries>().unwrap(), b);
        assert!("30,19".parse::<LengthBoundaries>().is_err());
        assert!("19".parse::<LengthBoundaries>().is_err());

        let docs: Vec<String> = [1, 18, 19, 25, 30, 31, 40, 5, 0, 20].iter().map(|&n| "s. ".repeat(n)).collect();
        let buckets = bucket_by_length(&docs, |d| d.as_str(), b);
        let sizes: Vec<usize> = buckets.iter().map(|(_, v)| v.len()).collect();
        assert_eq!(sizes, [4, 4, 2]);
    }

    #[test]
    fn report_means_and_csv() {
        let docs = vec![
            DocumentScores::score("a", "the cat sat", "the cat sat", RougeLMode::Summary),
            DocumentScores::score("b,c", "x y", "z w", RougeLMode::Summary),
        ];
        let report = EvalReport::new(docs);
        assert_eq!(report.mean.rouge1, 0.5);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("\"b,c\""));
        assert!(report.summary_table("TAAS").contains("50.00"));
    }

    /// Counts every n-gram occurrence by direct comparison.
    fn oracle_rouge_n(c: &[String], r: &[String], n: usize) -> RougeScore {
        let grams = |t: &[String]| -> Vec<Vec<String>> {
            if t.len() < n {
                vec![]
            } else {
                (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
            }
        };
        let (cg, rg) = (grams(c), grams(r));
        let mut used = vec![false; rg.len()];
        let mut hits = 0;
        for g in &cg {
            if let Some(j) = (0..rg.len()).find(|&j| !used[j] && &rg[j] == g) {
                used[j] = true;
                hits += 1;
            }
        }
        RougeScore::from_counts(hits, cg.len(), rg.len())
    }

    fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|n| it.any(|h| h == *n))
    }

    /// Longest subsequence of the shorter string found in the longer one, by
    /// enumerating every subset of positions.
    fn oracle_lcs(a: &[String], b: &[String]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        (0u32..1 << short.len())
            .filter_map(|mask| {
                let pick: Vec<&String> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
                is_subsequence(&pick, long).then_some(pick.len())
            })
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracles(c in "[abc]{0,10}", r in "[abc]{0,10}") {
            let ct: Vec<String> = c.chars().map(String::from).collect();
            let rt: Vec<String> = r.chars().map(String::from).collect();
            let (cs, rs) = (ct.join(" "), rt.join(" "));
            for n in [1, 2] {
                prop_assert_eq!(rouge_n(&cs, &rs, n), oracle_rouge_n(&ct, &rt, n));
            }
            let l = oracle_lcs(&ct, &rt);
            prop_assert_eq!(rouge_l(&cs, &rs), RougeScore::from_counts(l, ct.len(), rt.len()));
        }

        #[test]
        fn scores_are_bounded_and_symmetric_on_identity(c in "[a-d ]{0,30}", r in "[a-d .]{0,30}") {
            for s in [rouge_n(&c, &r, 1), rouge_n(&c, &r, 2), rouge_l(&c, &r)] {
                prop_assert!((0.0..=1.0).contains(&s.f1));
                prop_assert!((0.0..=1.0).contains(&s.precision));
                prop_assert!((0.0..=1.0).contains(&s.recall));
            }
            if !scoring_tokens(&r).is_empty() {
                prop_assert_eq!(rouge_l(&r, &r).f1, 1.0);
                prop_assert_eq!(rouge_n(&r, &r, 1).f1, 1.0);
            }
            let upper = format!("{}   \n", r.to_uppercase());
            prop_assert_eq!(rouge_l(&c, &upper), rouge_l(&c, &r));
            prop_assert_eq!(rouge_n(&upper, &c, 2), rouge_n(&r, &c, 2));
        }

        #[test]
        fn subsequence_reference_has_full_recall(c in "[a-c]{1,12}", keep in proptest::collection::vec(proptest::bool::ANY, 12)) {
            let ct: Vec<String> = c.chars().map(String::from).collect();
            let rt: Vec<String> = ct.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| t.clone()).collect();
            prop_assert!(rt.is_empty() || rouge_l(&ct.join(" "), &rt.join(" ")).recall == 1.0);
        }
    }
}
