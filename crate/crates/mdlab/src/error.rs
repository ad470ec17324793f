//! Crate-wide error type.

use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("position {pos} out of range for sequence of length {len}")]
    PositionOutOfRange { pos: usize, len: usize },

    #[error("token {token} at position {pos} outside vocabulary 0..={vocab}")]
    TokenOutOfRange { token: u32, pos: usize, vocab: u32 },

    #[error("mask token at position {pos} not allowed here")]
    UnexpectedMask { pos: usize },

    #[error("reverse step requires s < t, got s={s}, t={t}")]
    BadTimeOrder { s: f64, t: f64 },

    #[error("K={k} out of range: {masked} masked positions")]
    KOutOfRange { k: usize, masked: usize },

    #[error(
        "enumeration budget exceeded: {required:.3e} weighted evaluations needed, budget {budget:.3e}"
    )]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("malformed grid: {0}")]
    MalformedGrid(String),

    #[error("denoiser '{denoiser}' failed at step {step}: {message}")]
    DenoiserFailure {
        denoiser: String,
        step: usize,
        message: String,
    },

    #[error("external denoiser protocol violation: {0}")]
    Protocol(String),

    #[error("external denoiser timed out after {0:?}")]
    Timeout(Duration),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("denoiser assigns zero probability to the true token (sample {sample}, position {pos})")]
    InfiniteLoss { sample: usize, pos: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
