pub mod corpus;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod ntm;
pub mod numeric;
pub mod seq2seq;
pub mod topic_attention;

pub use error::{Result, TaasError};
