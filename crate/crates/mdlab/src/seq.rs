//! Sequences, masking, noise schedules, and marginal tables.
//!
//! Conventions fixed project-wide:
//! - tokens live in `{0, 1, ..., m}` where `0` is exclusively the mask symbol
//!   and data values occupy `{1..m}`;
//! - positions are 0-indexed throughout;
//! - a [`MarginalTable`] row `i` is a distribution over data values `{1..m}`
//!   (column `j` holds the probability of token `j + 1`).

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;

/// Fixed-length token sequence over vocabulary `{1..m}` plus mask symbol `0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<u32>,
    vocab: u32,
}

impl TokenSeq {
    pub fn new(tokens: Vec<u32>, vocab: u32) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::InvalidSpec("vocabulary size must be positive".into()));
        }
        for (pos, &t) in tokens.iter().enumerate() {
            if t > vocab {
                return Err(Error::TokenOutOfRange { token: t, pos, vocab });
            }
        }
        Ok(Self { tokens, vocab })
    }

    /// All-mask sequence of length `len`.
    pub fn all_mask(len: usize, vocab: u32) -> Self {
        Self { tokens: vec![0; len], vocab }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn get(&self, pos: usize) -> u32 {
        self.tokens[pos]
    }

    /// Replaces the token at `pos`. The caller guarantees `value <= vocab`.
    pub fn set(&mut self, pos: usize, value: u32) {
        debug_assert!(value <= self.vocab);
        self.tokens[pos] = value;
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.tokens[pos] == 0
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tokens[i] == 0).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == 0).count()
    }

    pub fn has_mask(&self) -> bool {
        self.tokens.iter().any(|&t| t == 0)
    }

    /// Returns the copy of `self` with every position in `mask` replaced by
    /// the mask symbol. Idempotent.
    pub fn apply_mask(&self, mask: &MaskSet) -> Result<Self> {
        mask.check_bounds(self.len())?;
        let mut out = self.clone();
        for &pos in mask.iter() {
            out.tokens[pos] = 0;
        }
        Ok(out)
    }

    /// Forward masking process: each coordinate survives independently with
    /// probability `alpha(t)` and is replaced by the mask symbol otherwise.
    /// The input must be fully unmasked.
    pub fn forward_mask(&self, t: f64, sched: &NoiseSchedule, rng: &RngHandle) -> Result<Self> {
        if let Some(pos) = self.tokens.iter().position(|&tok| tok == 0) {
            return Err(Error::UnexpectedMask { pos });
        }
        let alpha = sched.alpha(t);
        let mut r = rng.rng();
        let mut out = self.clone();
        for tok in out.tokens.iter_mut() {
            if r.gen::<f64>() >= alpha {
                *tok = 0;
            }
        }
        Ok(out)
    }

    /// Compact text form: digits for data values, `.` for the mask symbol.
    /// Only defined for vocabularies of size at most 9.
    pub fn to_compact(&self) -> Result<String> {
        if self.vocab > 9 {
            return Err(Error::Parse(format!(
                "compact text form needs vocab <= 9, got {}",
                self.vocab
            )));
        }
        Ok(self
            .tokens
            .iter()
            .map(|&t| if t == 0 { '.' } else { (b'0' + t as u8) as char })
            .collect())
    }

    pub fn from_compact(s: &str, vocab: u32) -> Result<Self> {
        let mut tokens = Vec::with_capacity(s.len());
        for (pos, c) in s.chars().enumerate() {
            let t = match c {
                '.' | '0' => 0,
                '1'..='9' => c as u32 - '0' as u32,
                _ => return Err(Error::Parse(format!("bad character '{c}' at {pos}"))),
            };
            if t > vocab {
                return Err(Error::TokenOutOfRange { token: t, pos, vocab });
            }
            tokens.push(t);
        }
        Ok(Self { tokens, vocab })
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_compact() {
            Ok(s) => f.write_str(&s),
            Err(_) => write!(f, "{:?}", self.tokens),
        }
    }
}

/// A set of positions to mask.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskSet {
    indices: BTreeSet<usize>,
}

impl MaskSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        Self { indices: indices.into_iter().collect() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full(len: usize) -> Self {
        Self { indices: (0..len).collect() }
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.indices.contains(&pos)
    }

    pub fn insert(&mut self, pos: usize) {
        self.indices.insert(pos);
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &usize> {
        self.indices.iter()
    }

    fn check_bounds(&self, len: usize) -> Result<()> {
        if let Some(&pos) = self.indices.iter().next_back() {
            if pos >= len {
                return Err(Error::PositionOutOfRange { pos, len });
            }
        }
        Ok(())
    }
}

impl FromIterator<usize> for MaskSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::new(iter)
    }
}

/// Survival-probability schedule `t -> alpha_t` with `alpha_0 = 1`,
/// `alpha_1 = 0`, non-increasing in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseSchedule {
    /// `alpha_t = 1 - t`. Default; makes the per-step unmask probability
    /// `(alpha_s - alpha_t) / (1 - alpha_t)` equal to `(t - s) / t`.
    Linear,
    /// `alpha_t = cos(pi t / 2)`.
    Cosine,
    /// Piecewise-linear table of `(t, alpha)` knots. Must start at `(0, 1)`
    /// and end at `(1, 0)` with non-increasing alphas.
    Table(Vec<(f64, f64)>),
}

impl NoiseSchedule {
    pub fn alpha(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            NoiseSchedule::Linear => 1.0 - t,
            NoiseSchedule::Cosine => (std::f64::consts::FRAC_PI_2 * t).cos(),
            NoiseSchedule::Table(knots) => {
                let mut prev = knots[0];
                for &k in &knots[1..] {
                    if t <= k.0 {
                        let w = if k.0 > prev.0 { (t - prev.0) / (k.0 - prev.0) } else { 1.0 };
                        return prev.1 + w * (k.1 - prev.1);
                    }
                    prev = k;
                }
                prev.1
            }
        }
    }

    /// `d alpha / d t`, defined almost everywhere.
    pub fn alpha_prime(&self, t: f64) -> f64 {
        match self {
            NoiseSchedule::Linear => -1.0,
            NoiseSchedule::Cosine => {
                -std::f64::consts::FRAC_PI_2 * (std::f64::consts::FRAC_PI_2 * t).sin()
            }
            NoiseSchedule::Table(knots) => {
                let t = t.clamp(0.0, 1.0);
                let mut prev = knots[0];
                for &k in &knots[1..] {
                    if t <= k.0 {
                        return if k.0 > prev.0 { (k.1 - prev.1) / (k.0 - prev.0) } else { 0.0 };
                    }
                    prev = k;
                }
                0.0
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseSchedule::Table(knots) = self {
            if knots.len() < 2 {
                return Err(Error::InvalidSpec("schedule table needs >= 2 knots".into()));
            }
            let first = knots[0];
            let last = knots[knots.len() - 1];
            if (first.0, first.1) != (0.0, 1.0) || (last.0, last.1) != (1.0, 0.0) {
                return Err(Error::InvalidSpec(
                    "schedule table must start at (0,1) and end at (1,0)".into(),
                ));
            }
            for w in knots.windows(2) {
                if w[1].0 < w[0].0 || w[1].1 > w[0].1 {
                    return Err(Error::InvalidSpec(
                        "schedule table must be non-decreasing in t, non-increasing in alpha".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Probability that a masked coordinate is revealed on the step `t -> s`.
    pub fn unmask_prob(&self, s: f64, t: f64) -> Result<f64> {
        if s >= t {
            return Err(Error::BadTimeOrder { s, t });
        }
        let (a_s, a_t) = (self.alpha(s), self.alpha(t));
        if 1.0 - a_t <= 0.0 {
            // alpha_t = 1 means nothing is masked; the rate is vacuous.
            return Ok(0.0);
        }
        Ok(((a_s - a_t) / (1.0 - a_t)).clamp(0.0, 1.0))
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::Linear
    }
}

/// Row tolerance for marginal normalization checks.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Per-position categorical distributions over data values `{1..m}`.
///
/// Only rows whose position is in `active` are meaningful; consumers must
/// ignore the rest. Denoisers mark exactly the masked positions active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    len: usize,
    vocab: u32,
    probs: Vec<f64>,
    active: Vec<bool>,
}

impl MarginalTable {
    pub fn zeros(len: usize, vocab: u32) -> Self {
        Self {
            len,
            vocab,
            probs: vec![0.0; len * vocab as usize],
            active: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn row(&self, pos: usize) -> &[f64] {
        let m = self.vocab as usize;
        &self.probs[pos * m..(pos + 1) * m]
    }

    pub fn set_row(&mut self, pos: usize, row: &[f64]) {
        assert_eq!(row.len(), self.vocab as usize);
        let m = self.vocab as usize;
        self.probs[pos * m..(pos + 1) * m].copy_from_slice(row);
        self.active[pos] = true;
    }

    pub fn is_active(&self, pos: usize) -> bool {
        self.active[pos]
    }

    pub fn active_positions(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.active[i]).collect()
    }

    /// Probability of `token` (a data value in `{1..m}`) at `pos`.
    pub fn prob(&self, pos: usize, token: u32) -> f64 {
        debug_assert!(token >= 1 && token <= self.vocab);
        self.row(pos)[(token - 1) as usize]
    }

    /// Checks that every active row is a distribution within [`ROW_SUM_TOL`].
    pub fn validate(&self) -> Result<()> {
        for pos in 0..self.len {
            if !self.active[pos] {
                continue;
            }
            let row = self.row(pos);
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::Degenerate(format!("negative or non-finite mass at row {pos}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Degenerate(format!("row {pos} sums to {sum}, expected 1")));
            }
        }
        Ok(())
    }

    /// Samples a data value from the row at `pos`.
    pub fn sample_row(&self, pos: usize, rng: &mut impl Rng) -> u32 {
        let row = self.row(pos);
        let total: f64 = row.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (j, &p) in row.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return j as u32 + 1;
            }
        }
        self.vocab
    }
}
