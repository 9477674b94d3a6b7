//! Corpus ingestion: JSONL records, tokenization, the two vocabularies,
//! bag-of-words features and padded batches.

mod batch;
mod jsonl;
mod tokenize;
mod vocab;

pub use batch::{make_batches, Batch, EncodedPair, Featurizer};
pub use jsonl::{load_jsonl, read_jsonl, DocumentPair, JsonlReader};
pub use tokenize::{detokenize, is_punctuation, is_sentence_end, tokenize};
pub use vocab::{
    to_bow, BowVector, StopWords, TopicVocabulary, Vocabulary, BOS, CLS, ENGLISH_STOPWORDS, EOS, NUM_SPECIAL, PAD, SPECIAL_TOKENS, UNK,
};
