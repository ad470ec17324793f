//! Experiment configuration schema. Parsing is strict: unknown fields are
//! fatal, so presets and code cannot drift apart silently.

use serde::{Deserialize, Serialize};

use mdlab::distrib::DistribConfig;
use mdlab::puzzles::StrategyCeiling;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Optional output directory; the CLI flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Subset-sum vs any-order vs ELBO Monte Carlo agreement on randomized
    /// (distribution, denoiser) pairs.
    LossEquivalence {
        n_pairs: usize,
        max_len: usize,
        max_vocab: u32,
        n_mc: usize,
        exact_tolerance: f64,
    },
    /// Per-position subproblem error of a latent-corrupted denoiser under the
    /// grouped masking profile (l latents + l P/N observations at a time).
    ErrorImbalance {
        n_latent: usize,
        n_obs: usize,
        lambda: f64,
        masked_latents: usize,
        mask_reps: usize,
        n_mc_per_mask: usize,
    },
    /// Conditional infilling on a latent-corrupted NAE spec: masked
    /// observation accuracy of vanilla vs adaptive strategies against the
    /// planted sequence.
    NaeSatInference {
        n_latent: usize,
        n_obs: usize,
        lambda: f64,
        trials: usize,
        obs_mask_fraction: f64,
        n_steps: usize,
        /// Required (margin - vanilla) accuracy gap in percentage points,
        /// tested one-sided at 95%.
        min_gap_pp: f64,
    },
    /// Belief-propagation degree scan (and/or tree-exactness check).
    BpScan {
        predicate: PredicateConfig,
        /// Grid on the degree-per-arity axis; the instance degree is
        /// `k * value`.
        degree_over_k_grid: Vec<f64>,
        n_vars: usize,
        reps: usize,
        max_iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        assertions: Option<BpAssertions>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tree_check: Option<TreeCheck>,
    },
    /// Solve-rate comparison of decoding strategies on generated puzzles.
    SudokuEval {
        n_puzzles: usize,
        ceiling: StrategyCeiling,
        n_steps: usize,
        /// Margin decoding must solve everything (singles-only corpora).
        #[serde(default)]
        require_margin_all: bool,
        /// Pairs tested for strict superiority (one-sided, 95%).
        #[serde(default)]
        strictly_better: Vec<(String, String)>,
        /// Pairs where the first must not be significantly below the second.
        #[serde(default)]
        not_below: Vec<(String, String)>,
    },
    /// Reverse-sampler runs on an L&O spec: trace export, optional final
    /// distribution check against exact enumeration, optional per-step
    /// reveal-count statistics.
    SampleTrace {
        spec: DistribConfig,
        n_steps: usize,
        n_samples: usize,
        emit_traces: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tv_check: Option<TvCheck>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step_stats: Option<StepStats>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateConfig {
    Nae { vocab: u32, arity: usize },
    Coloring { vocab: u32 },
}

impl PredicateConfig {
    pub fn build(&self) -> mdlab::bp::Predicate {
        match self {
            PredicateConfig::Nae { vocab, arity } => mdlab::bp::Predicate::nae(*vocab, *arity),
            PredicateConfig::Coloring { vocab } => mdlab::bp::Predicate::inequality(*vocab),
        }
    }
}

/// Scan acceptance thresholds, all on the degree-per-arity axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpAssertions {
    /// (axis, tol): every grid point at or below `axis` must have both
    /// overlaps within `tol` of the uninformative baseline `1/m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uninformative_up_to: Option<(f64, f64)>,
    /// (axis, min_gain, agree_tol): every grid point at or above `axis` must
    /// have both overlaps exceeding baseline + `min_gain` and agreeing within
    /// `agree_tol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered_from: Option<(f64, f64, f64)>,
    /// (lo, hi, min_gap): at least one grid point strictly inside (lo, hi)
    /// where the planted-init overlap beats random-init by `min_gap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_window: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeCheck {
    pub instances: usize,
    pub n_vars: usize,
    pub n_clauses: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvCheck {
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepStats {
    /// Masked positions per step draw.
    pub masked: usize,
    pub t: f64,
    pub s: f64,
    pub reps: usize,
    /// Chi-squared significance level the counts must survive.
    pub significance: f64,
}

/// One pass/fail line of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Run manifest written next to the artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_ms: u128,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<String>,
}

/// Stable hash of the canonical (sorted-key) JSON encoding.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let canon = serde_json::to_string(&value).expect("value serializes");
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in canon.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}
