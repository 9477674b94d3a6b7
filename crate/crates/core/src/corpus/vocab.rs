use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::jsonl::DocumentPair;
use super::tokenize::{detokenize, is_punctuation, tokenize};
use crate::error::{Result, TaasError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const CLS: usize = 4;
pub const NUM_SPECIAL: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIAL] = ["<pad>", "<unk>", "<bos>", "<eos>", "<cls>"];

/// Counts tokens and returns those with `count >= min_count`, most frequent
/// first, ties broken lexicographically.
fn ranked_tokens<'a>(tokens: impl Iterator<Item = &'a str>, min_count: usize) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().map(|(t, _)| t.to_string()).collect()
}

/// Token vocabulary for the encoder-decoder, with the special tokens at ids
/// 0 through 4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from document and summary tokens. `cap` counts the special
    /// tokens, so at most `cap - 5` regular tokens are kept.
    pub fn build(pairs: &[DocumentPair], cap: usize, min_count: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(TaasError::EmptyCorpus("cannot build a vocabulary from zero pairs".into()));
        }
        if cap < NUM_SPECIAL {
            return Err(TaasError::config("vocab_cap", format!("must be at least {NUM_SPECIAL}")));
        }
        let tokenized: Vec<Vec<String>> = pairs.iter().flat_map(|p| [tokenize(&p.document), tokenize(&p.summary)]).collect();
        let ranked = ranked_tokens(tokenized.iter().flatten().map(String::as_str), min_count.max(1));
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(cap - NUM_SPECIAL))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Regular tokens for `ids`, stopping at EOS and skipping PAD, BOS and CLS.
    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .filter(|&&id| !matches!(id, PAD | BOS | CLS))
            .filter_map(|&id| self.token(id))
            .collect()
    }

    pub fn decode_text(&self, ids: &[usize]) -> String {
        detokenize(&self.decode(ids))
    }

    /// One token per line in id order; the first five lines are the special
    /// tokens.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(TaasError::Record {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("expected special token `{special}`"),
                });
            }
        }
        let mut seen = HashSet::new();
        for (i, t) in tokens.iter().enumerate() {
            if !seen.insert(t) {
                return Err(TaasError::Record {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("duplicate token `{t}`"),
                });
            }
        }
        Ok(Self::from_tokens(tokens))
    }
}

/// Embedded English stopword list, one word per line.
pub const ENGLISH_STOPWORDS: &str = include_str!("stopwords.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn parse(text: &str) -> Self {
        StopWords(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bag-of-words counts over a [`TopicVocabulary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BowVector(pub Vec<u32>);

impl BowVector {
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

/// Stopword-filtered vocabulary over which the topic model's word
/// distributions are defined. Built from documents only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicVocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl TopicVocabulary {
    pub fn build(pairs: &[DocumentPair], stopwords: &StopWords, cap: usize, min_count: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(TaasError::EmptyCorpus("cannot build a topic vocabulary from zero pairs".into()));
        }
        let tokenized: Vec<Vec<String>> = pairs.iter().map(|p| tokenize(&p.document)).collect();
        let candidates = tokenized
            .iter()
            .flatten()
            .map(String::as_str)
            .filter(|t| Self::admissible(t, stopwords));
        let words: Vec<String> = ranked_tokens(candidates, min_count.max(1)).into_iter().take(cap).collect();
        if words.is_empty() {
            return Err(TaasError::EmptyCorpus(
                "topic vocabulary is empty after stopword and frequency filtering".into(),
            ));
        }
        Ok(Self::from_words(words))
    }

    fn admissible(token: &str, stopwords: &StopWords) -> bool {
        !is_punctuation(token) && token.chars().any(char::is_alphabetic) && !stopwords.contains(token)
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TopicVocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Counts of the text's tokens that are in this vocabulary.
    pub fn to_bow(&self, text: &str) -> BowVector {
        let mut counts = vec![0u32; self.words.len()];
        for t in tokenize(text) {
            if let Some(&i) = self.index.get(&t) {
                counts[i] += 1;
            }
        }
        BowVector(counts)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.words.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::from_words(text.lines().map(str::to_string).collect()))
    }
}

/// Bag-of-words for a pair's document.
pub fn to_bow(pair: &DocumentPair, topic_vocab: &TopicVocabulary) -> BowVector {
    topic_vocab.to_bow(&pair.document)
}
