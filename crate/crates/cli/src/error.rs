use taas_core::TaasError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{flag}: {reason}")]
    Invalid { flag: String, reason: String },

    #[error("{} id(s) without a match: {}", .0.len(), .0.join(", "))]
    UnmatchedIds(Vec<String>),
}

/// 1 for validation failures anywhere in the chain, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<TaasError>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.downcast_ref::<CliError>().is_some() {
            return 1;
        }
    }
    2
}
