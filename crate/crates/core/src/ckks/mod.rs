//! RNS-CKKS: parameters, encoding, keys and homomorphic evaluation.

mod container;
mod context;
mod encoding;
mod eval;
mod keys;
mod params;

pub use container::{write_atomic, ContainerKind, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use context::CkksContext;
pub use encoding::Encoder;
pub use eval::{Ciphertext, Plaintext, RefreshMode, SCALE_TOLERANCE};
pub use keys::{normalize_step, GaloisKey, KeyGenOptions, KeySet, PublicKey, PublicKeySet, SecretKey, SwitchingKey};
pub use params::{CkksParams, SecurityTag};

use crate::arith::ArithError;

#[derive(Debug, thiserror::Error)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{given} values do not fit in {slots} slots")]
    TooManyValues { given: usize, slots: usize },
    #[error("scale overflow: {0}")]
    ScaleOverflow(String),
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("scale mismatch: {left:e} vs {right:e}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("no level left to rescale")]
    LevelExhausted,
    #[error("level {level} exceeds the chain maximum {max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("no rotation key or composition for step {0}")]
    MissingKey(i64),
    #[error("evaluation keys support levels up to {available}, operation needs {needed}")]
    KeyLevelTooLow { needed: usize, available: usize },
    #[error("debug refresh requires explicit insecure test mode")]
    RefreshDisabled,
    #[error("parameter digest mismatch: container was written for {found}, expected {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("malformed container: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Arith(#[from] ArithError),
}
