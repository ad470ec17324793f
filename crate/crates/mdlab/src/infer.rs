//! Reverse samplers.
//!
//! Two families, sharing the value-sampling step "draw each revealed token
//! from the denoiser's marginal row":
//!
//! - *vanilla*: every masked position independently joins the reveal set with
//!   probability `(alpha_s - alpha_t) / (1 - alpha_t)` on the step `t -> s`;
//! - *adaptive*: the reveal set is the top-K masked positions under a scoring
//!   oracle computed from the denoiser's marginals — uniform random scores,
//!   top probability, or top-probability margin — with optional Gaussian or
//!   Gumbel score noise and K chosen to match the vanilla reveal rate in
//!   expectation (deterministically rounded or drawn binomially).
//!
//! With an exact denoiser every decoding order reproduces the data
//! distribution; order only matters for imperfect denoisers, which is what
//! these samplers are for studying.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoise::Denoiser;
use crate::distrib::{standard_gumbel, standard_normal};
use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::seq::{MarginalTable, NoiseSchedule, TokenSeq};
use crate::stats::binomial_draw;

/// Position-scoring rule for adaptive unmasking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// I.i.d. uniform scores; order-agnostic.
    Random,
    /// Largest marginal entry.
    TopProbability,
    /// Gap between the two largest marginal entries. Distinguishes "one clear
    /// value" from "two competing values with high mass".
    TopProbabilityMargin,
}

/// Additive score noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureNoise {
    None,
    Gaussian { sigma: f64 },
    Gumbel { scale: f64 },
}

impl TemperatureNoise {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            TemperatureNoise::None => 0.0,
            TemperatureNoise::Gaussian { sigma } => sigma * standard_normal(rng),
            TemperatureNoise::Gumbel { scale } => scale * standard_gumbel(rng),
        }
    }
}

/// How many positions to reveal per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    /// `round(masked * unmask_prob)`, clamped to keep progress.
    Deterministic,
    /// `Binomial(masked, unmask_prob)`; matches vanilla inference exactly in
    /// distribution when paired with random scoring.
    Binomial,
    /// A constant reveal count per step.
    Fixed(usize),
}

/// Full adaptive-unmasking configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnmaskOracle {
    pub kind: OracleKind,
    pub k_mode: KMode,
    pub temperature: TemperatureNoise,
}

impl UnmaskOracle {
    pub fn random() -> Self {
        Self {
            kind: OracleKind::Random,
            k_mode: KMode::Deterministic,
            temperature: TemperatureNoise::None,
        }
    }

    pub fn top_probability() -> Self {
        Self {
            kind: OracleKind::TopProbability,
            k_mode: KMode::Deterministic,
            temperature: TemperatureNoise::None,
        }
    }

    pub fn margin() -> Self {
        Self {
            kind: OracleKind::TopProbabilityMargin,
            k_mode: KMode::Deterministic,
            temperature: TemperatureNoise::None,
        }
    }

    /// Margin scoring with one reveal per step. The default for puzzles,
    /// where the denoiser refreshes after every reveal.
    pub fn margin_single() -> Self {
        Self {
            kind: OracleKind::TopProbabilityMargin,
            k_mode: KMode::Fixed(1),
            temperature: TemperatureNoise::None,
        }
    }

    /// Margin scoring with 0.5-scaled Gumbel score noise.
    pub fn margin_gumbel_half() -> Self {
        Self {
            kind: OracleKind::TopProbabilityMargin,
            k_mode: KMode::Deterministic,
            temperature: TemperatureNoise::Gumbel { scale: 0.5 },
        }
    }

    pub fn with_k_mode(mut self, k_mode: KMode) -> Self {
        self.k_mode = k_mode;
        self
    }

    pub fn with_temperature(mut self, temperature: TemperatureNoise) -> Self {
        self.temperature = temperature;
        self
    }
}

/// Scores for the given masked positions (parallel to `positions`).
pub fn score_positions(
    marginals: &MarginalTable,
    positions: &[usize],
    kind: OracleKind,
    temperature: &TemperatureNoise,
    rng: &mut impl Rng,
) -> Vec<f64> {
    positions
        .iter()
        .map(|&pos| {
            let base = match kind {
                OracleKind::Random => rng.gen::<f64>(),
                OracleKind::TopProbability => top_two(marginals.row(pos)).0,
                OracleKind::TopProbabilityMargin => {
                    let (a, b) = top_two(marginals.row(pos));
                    a - b
                }
            };
            base + temperature.draw(rng)
        })
        .collect()
}

/// Largest and second-largest entries of a row. A single-value vocabulary has
/// no runner-up; its margin degenerates to the top entry.
fn top_two(row: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in row {
        if p > a {
            b = a;
            a = p;
        } else if p > b {
            b = p;
        }
    }
    if b == f64::NEG_INFINITY {
        b = 0.0;
    }
    (a, b)
}

/// Indices of the `k` highest-scored positions, ties broken by lowest
/// position index. Invariant under any strictly increasing transform of the
/// scores.
pub fn top_k_select(positions: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    debug_assert_eq!(positions.len(), scores.len());
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .total_cmp(&scores[i])
            .then_with(|| positions[i].cmp(&positions[j]))
    });
    order.truncate(k);
    order.into_iter().map(|i| positions[i]).collect()
}

/// One revealed token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reveal {
    pub pos: usize,
    pub value: u32,
    /// Oracle score that selected this position; absent for vanilla steps.
    pub score: Option<f64>,
}

/// One reverse step of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub t: f64,
    pub s: f64,
    pub revealed: Vec<Reveal>,
}

/// Complete record of a reverse run: per-step reveal sets with scores, plus
/// the final sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseTrace {
    pub steps: Vec<TraceStep>,
    pub final_seq: TokenSeq,
}

impl ReverseTrace {
    /// JSON-lines export: one step object per line.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Checks the bookkeeping invariants against the state the run started
    /// from: reveal sets are disjoint, cover exactly the initially masked
    /// positions, and the final sequence is fully unmasked and agrees with
    /// the initial sequence elsewhere.
    pub fn validate(&self, initial: &TokenSeq) -> Result<()> {
        let mut covered = vec![false; initial.len()];
        for step in &self.steps {
            for r in &step.revealed {
                if covered[r.pos] {
                    return Err(Error::Degenerate(format!("position {} revealed twice", r.pos)));
                }
                if !initial.is_masked(r.pos) {
                    return Err(Error::Degenerate(format!(
                        "position {} was not masked initially",
                        r.pos
                    )));
                }
                covered[r.pos] = true;
            }
        }
        if self.final_seq.has_mask() {
            return Err(Error::Degenerate("final sequence still has masks".into()));
        }
        for pos in 0..initial.len() {
            if initial.is_masked(pos) {
                if !covered[pos] {
                    return Err(Error::Degenerate(format!("masked position {pos} never revealed")));
                }
            } else if self.final_seq.get(pos) != initial.get(pos) {
                return Err(Error::Degenerate(format!("unmasked position {pos} was modified")));
            }
        }
        Ok(())
    }
}

/// One vanilla reverse step `t -> s`: every masked position independently
/// joins the reveal set with probability `(alpha_s - alpha_t)/(1 - alpha_t)`
/// and receives a value drawn from the denoiser's row.
pub fn vanilla_step(
    x_t: &TokenSeq,
    s: f64,
    t: f64,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    rng: &RngHandle,
) -> Result<TokenSeq> {
    let mut r = rng.rng();
    Ok(vanilla_step_with(x_t, s, t, sched, denoiser, &mut r)?.0)
}

pub(crate) fn vanilla_step_with(
    x_t: &TokenSeq,
    s: f64,
    t: f64,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    rng: &mut impl Rng,
) -> Result<(TokenSeq, Vec<Reveal>)> {
    if s >= t {
        return Err(Error::BadTimeOrder { s, t });
    }
    let p = sched.unmask_prob(s, t)?;
    let mut selected = Vec::new();
    for pos in 0..x_t.len() {
        if x_t.is_masked(pos) && rng.gen::<f64>() < p {
            selected.push(pos);
        }
    }
    let mut out = x_t.clone();
    let mut reveals = Vec::with_capacity(selected.len());
    if !selected.is_empty() {
        let table = denoiser.predict(x_t)?;
        for pos in selected {
            let value = table.sample_row(pos, rng);
            out.set(pos, value);
            reveals.push(Reveal { pos, value, score: None });
        }
    }
    Ok((out, reveals))
}

/// Number of positions to reveal for a step `t -> s` with `masked_count`
/// masks outstanding.
pub fn k_schedule(
    masked_count: usize,
    s: f64,
    t: f64,
    sched: &NoiseSchedule,
    mode: KMode,
    rng: &RngHandle,
) -> Result<usize> {
    let mut r = rng.rng();
    k_schedule_with(masked_count, s, t, sched, mode, &mut r)
}

pub(crate) fn k_schedule_with(
    masked_count: usize,
    s: f64,
    t: f64,
    sched: &NoiseSchedule,
    mode: KMode,
    rng: &mut impl Rng,
) -> Result<usize> {
    if masked_count == 0 {
        return Ok(0);
    }
    match mode {
        KMode::Fixed(k) => Ok(k.clamp(1, masked_count)),
        KMode::Deterministic => {
            let p = sched.unmask_prob(s, t)?;
            let k = (masked_count as f64 * p).round() as usize;
            Ok(k.clamp(1, masked_count))
        }
        KMode::Binomial => {
            let p = sched.unmask_prob(s, t)?;
            Ok(binomial_draw(masked_count, p, rng))
        }
    }
}

/// One adaptive reverse step: reveal the `k` masked positions with the
/// highest oracle scores (ties to the lowest index), sampling each value from
/// the denoiser's row.
pub fn adaptive_step(
    x_t: &TokenSeq,
    k: usize,
    denoiser: &dyn Denoiser,
    oracle: &UnmaskOracle,
    rng: &RngHandle,
) -> Result<TokenSeq> {
    let mut r = rng.rng();
    Ok(adaptive_step_with(x_t, k, denoiser, oracle, &mut r)?.0)
}

pub(crate) fn adaptive_step_with(
    x_t: &TokenSeq,
    k: usize,
    denoiser: &dyn Denoiser,
    oracle: &UnmaskOracle,
    rng: &mut impl Rng,
) -> Result<(TokenSeq, Vec<Reveal>)> {
    let masked = x_t.masked_positions();
    if k == 0 || k > masked.len() {
        return Err(Error::KOutOfRange { k, masked: masked.len() });
    }
    let table = denoiser.predict(x_t)?;
    let scores = score_positions(&table, &masked, oracle.kind, &oracle.temperature, rng);
    let selected = top_k_select(&masked, &scores, k);
    let score_of = |pos: usize| {
        masked
            .iter()
            .position(|&p| p == pos)
            .map(|i| scores[i])
            .expect("selected position is masked")
    };
    let mut out = x_t.clone();
    let mut reveals = Vec::with_capacity(selected.len());
    for pos in selected {
        let value = table.sample_row(pos, rng);
        out.set(pos, value);
        reveals.push(Reveal { pos, value, score: Some(score_of(pos)) });
    }
    Ok((out, reveals))
}

/// Runs vanilla reverse sampling from the all-mask sequence.
pub fn vanilla_sample(
    len: usize,
    vocab: u32,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    n_steps: usize,
    rng: &RngHandle,
) -> Result<ReverseTrace> {
    vanilla_sample_from(&TokenSeq::all_mask(len, vocab), sched, denoiser, n_steps, rng)
}

/// Runs vanilla reverse sampling from an arbitrary partially masked state
/// (e.g. a puzzle with givens). The uniform time grid `t = 1 -> 0` drives the
/// reveal probabilities; the terminal step reveals everything left.
pub fn vanilla_sample_from(
    initial: &TokenSeq,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    n_steps: usize,
    rng: &RngHandle,
) -> Result<ReverseTrace> {
    if n_steps == 0 {
        return Err(Error::InvalidSpec("n_steps must be >= 1".into()));
    }
    let mut r = rng.rng();
    let mut x = initial.clone();
    let mut steps = Vec::new();
    for j in 0..n_steps {
        if !x.has_mask() {
            break;
        }
        let t = 1.0 - j as f64 / n_steps as f64;
        let s = if j + 1 == n_steps { 0.0 } else { 1.0 - (j + 1) as f64 / n_steps as f64 };
        let (next, revealed) =
            vanilla_step_with(&x, s, t, sched, denoiser, &mut r).map_err(|e| step_error(e, j))?;
        x = next;
        // Fine time grids produce many steps that reveal nothing; those carry
        // no information, so traces keep only the productive ones.
        if !revealed.is_empty() {
            steps.push(TraceStep { index: j, t, s, revealed });
        }
    }
    Ok(ReverseTrace { steps, final_seq: x })
}

/// Runs adaptive reverse sampling from the all-mask sequence.
pub fn adaptive_sample(
    len: usize,
    vocab: u32,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    oracle: &UnmaskOracle,
    n_steps: usize,
    rng: &RngHandle,
) -> Result<ReverseTrace> {
    adaptive_sample_from(&TokenSeq::all_mask(len, vocab), sched, denoiser, oracle, n_steps, rng)
}

/// Runs adaptive reverse sampling from an arbitrary partially masked state.
/// K follows the oracle's K-mode on the same time grid vanilla uses, clamped
/// to at least one reveal per step, so the run finishes in at most `masked`
/// steps.
pub fn adaptive_sample_from(
    initial: &TokenSeq,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    oracle: &UnmaskOracle,
    n_steps: usize,
    rng: &RngHandle,
) -> Result<ReverseTrace> {
    if n_steps == 0 {
        return Err(Error::InvalidSpec("n_steps must be >= 1".into()));
    }
    let mut r = rng.rng();
    let mut x = initial.clone();
    let mut steps = Vec::new();
    let mut j = 0usize;
    while x.has_mask() {
        let (t, s) = if j < n_steps {
            let t = 1.0 - j as f64 / n_steps as f64;
            let s = if j + 1 == n_steps { 0.0 } else { 1.0 - (j + 1) as f64 / n_steps as f64 };
            (t, s)
        } else {
            // Fixed-K runs may outlast the nominal grid; keep stepping at the
            // terminal segment.
            (1.0 / n_steps as f64, 0.0)
        };
        let masked_count = x.masked_count();
        let k = k_schedule_with(masked_count, s, t, sched, oracle.k_mode, &mut r)
            .map_err(|e| step_error(e, j))?
            .clamp(1, masked_count);
        let (next, revealed) = adaptive_step_with(&x, k, denoiser, oracle, &mut r)
            .map_err(|e| step_error(e, j))?;
        x = next;
        steps.push(TraceStep { index: j, t, s, revealed });
        j += 1;
    }
    Ok(ReverseTrace { steps, final_seq: x })
}

fn step_error(e: Error, step: usize) -> Error {
    match e {
        Error::DenoiserFailure { denoiser, message, .. } => {
            Error::DenoiserFailure { denoiser, step, message }
        }
        other => Error::DenoiserFailure {
            denoiser: String::new(),
            step,
            message: other.to_string(),
        },
    }
}
