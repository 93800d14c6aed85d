//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("unknown item id {0:?}")]
    UnknownItem(String),

    #[error("item {id:?} inserted at time {inserted} evaluated at earlier time {at}")]
    ItemFromFuture { id: String, inserted: u64, at: u64 },

    #[error("invalid cover at t={t}: {detail}")]
    InvalidCover { t: u64, detail: String },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("policy {policy:?} does not support variant {variant:?}")]
    PolicyMismatch { policy: String, variant: String },

    #[error("policy error at t={t}: {detail}")]
    Policy { t: u64, detail: String },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
