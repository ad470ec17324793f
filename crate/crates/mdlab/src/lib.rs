//! Masked-diffusion inference laboratory.
//!
//! This crate implements the machinery for studying *token ordering* in
//! masked diffusion models at desk scale, where everything can be checked
//! against exact enumeration:
//!
//! - [`seq`]: token sequences over `{1..m}` with `0` reserved as the mask
//!   symbol, mask sets, noise schedules, and per-position marginal tables.
//! - [`distrib`]: latents-and-observations (L&O) distributions — not-all-equal
//!   predicate observations, noisy sparse parity, random slabs — with exact
//!   posteriors computed by enumeration.
//! - [`denoise`]: the denoiser abstraction (partially masked sequence ->
//!   per-position marginals) with exact, corrupted, Sudoku candidate-set, and
//!   external-subprocess implementations.
//! - [`infer`]: reverse samplers — schedule-driven random-order unmasking and
//!   adaptive unmasking driven by top-probability / top-probability-margin
//!   oracles.
//! - [`loss`]: the masked-diffusion loss in three equivalent formulations
//!   (weighted ELBO integral, subset sum, any-order autoregressive), plus
//!   per-position subproblem error against the exact posterior.
//! - [`bp`]: planted constraint satisfaction, belief propagation, overlap,
//!   and threshold scans locating the easy/hard/impossible regimes.
//! - [`puzzles`]: Sudoku generation, validation, and solve-rate evaluation of
//!   inference strategies.

pub mod bp;
pub mod denoise;
pub mod distrib;
pub mod error;
pub mod infer;
pub mod loss;
mod par;
pub mod puzzles;
pub mod rng;
pub mod seq;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngHandle;
pub use seq::{MarginalTable, MaskSet, NoiseSchedule, TokenSeq};
