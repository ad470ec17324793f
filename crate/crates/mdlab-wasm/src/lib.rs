//! Browser bindings for the masked-diffusion lab: a Sudoku decoding stepper,
//! a sampling-order playground on a small latents-and-observations spec, and
//! a belief-propagation overlap explorer. All functions speak JSON strings so
//! the page needs no generated TypeScript.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mdlab::bp::{self, BpInit, Predicate};
use mdlab::denoise::{Denoiser, ExactDenoiser, SudokuDenoiser};
use mdlab::distrib::NaeSatSpec;
use mdlab::infer::{adaptive_sample_from, vanilla_sample_from, KMode, UnmaskOracle};
use mdlab::puzzles::{generate_puzzles, solve_unique, StrategyCeiling};
use mdlab::seq::{NoiseSchedule, TokenSeq};
use mdlab::RngHandle;

fn oracle_by_name(name: &str) -> Result<Option<UnmaskOracle>, JsError> {
    match name {
        "random" => Ok(None),
        "top_probability" => Ok(Some(UnmaskOracle::top_probability().with_k_mode(KMode::Fixed(1)))),
        "margin" => Ok(Some(UnmaskOracle::margin_single())),
        other => Err(JsError::new(&format!("unknown oracle '{other}'"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
struct PuzzleOut {
    puzzle: String,
    solution: String,
    difficulty: String,
}

/// Generates one Sudoku puzzle with its unique solution.
#[wasm_bindgen]
pub fn sudoku_new(seed: u32, any_difficulty: bool) -> Result<String, JsError> {
    let ceiling = if any_difficulty { StrategyCeiling::Any } else { StrategyCeiling::SinglesOnly };
    let records = generate_puzzles(1, ceiling, &RngHandle::new(seed as u64, 0))
        .map_err(|e| JsError::new(&e.to_string()))?;
    let rec = &records[0];
    Ok(to_json(&PuzzleOut {
        puzzle: rec.puzzle.to_compact().map_err(|e| JsError::new(&e.to_string()))?,
        solution: rec
            .solution
            .as_ref()
            .expect("generator stores solutions")
            .to_compact()
            .map_err(|e| JsError::new(&e.to_string()))?,
        difficulty: rec.difficulty_tag.clone(),
    })?)
}

#[derive(Serialize)]
struct SudokuStep {
    pos: usize,
    value: u32,
    score: f64,
    correct: bool,
}

#[derive(Serialize)]
struct SudokuTraceOut {
    steps: Vec<SudokuStep>,
    solved: bool,
}

/// Decodes a puzzle cell by cell with the chosen ordering oracle, reporting
/// every reveal with its score and correctness.
#[wasm_bindgen]
pub fn sudoku_trace(puzzle: &str, oracle: &str, seed: u32) -> Result<String, JsError> {
    let grid = TokenSeq::from_compact(puzzle, 9).map_err(|e| JsError::new(&e.to_string()))?;
    let solution = solve_unique(&grid)
        .map_err(|e| JsError::new(&e.to_string()))?
        .ok_or_else(|| JsError::new("puzzle has no unique solution"))?;
    let denoiser = SudokuDenoiser::new();
    let rng = RngHandle::new(seed as u64, 1);
    let trace = match oracle_by_name(oracle)? {
        None => vanilla_sample_from(&grid, &NoiseSchedule::Linear, &denoiser, 81, &rng),
        Some(oracle) => {
            adaptive_sample_from(&grid, &NoiseSchedule::Linear, &denoiser, &oracle, 81, &rng)
        }
    }
    .map_err(|e| JsError::new(&e.to_string()))?;
    let mut steps = Vec::new();
    for step in &trace.steps {
        for reveal in &step.revealed {
            steps.push(SudokuStep {
                pos: reveal.pos,
                value: reveal.value,
                score: reveal.score.unwrap_or(f64::NAN),
                correct: reveal.value == solution.get(reveal.pos),
            });
        }
    }
    Ok(to_json(&SudokuTraceOut { solved: trace.final_seq == solution, steps })?)
}

#[derive(Serialize)]
struct LoStep {
    pos: usize,
    value: u32,
    is_latent: bool,
    score: f64,
}

#[derive(Serialize)]
struct LoTraceOut {
    n_latent: usize,
    len: usize,
    steps: Vec<LoStep>,
    consistent: bool,
}

/// One decoding run on a small binary NAE spec (4 latents, 6 observations),
/// showing which positions the oracle chooses first.
#[wasm_bindgen]
pub fn lo_trace(seed: u32, oracle: &str) -> Result<String, JsError> {
    let spec = demo_spec(seed)?;
    let denoiser = ExactDenoiser::new(spec.clone());
    let rng = RngHandle::new(seed as u64, 77);
    let initial = TokenSeq::all_mask(spec.len(), 2);
    let trace = match oracle_by_name(oracle)? {
        None => vanilla_sample_from(&initial, &NoiseSchedule::Linear, &denoiser, 200, &rng),
        Some(o) => adaptive_sample_from(&initial, &NoiseSchedule::Linear, &denoiser, &o, 200, &rng),
    }
    .map_err(|e| JsError::new(&e.to_string()))?;
    let mut steps = Vec::new();
    for step in &trace.steps {
        for reveal in &step.revealed {
            steps.push(LoStep {
                pos: reveal.pos,
                value: reveal.value,
                is_latent: reveal.pos < spec.n_latent(),
                score: reveal.score.unwrap_or(f64::NAN),
            });
        }
    }
    let consistent = check_consistency(&spec, &trace.final_seq);
    Ok(to_json(&LoTraceOut {
        n_latent: spec.n_latent(),
        len: spec.len(),
        steps,
        consistent,
    })?)
}

fn demo_spec(seed: u32) -> Result<mdlab::distrib::LOSpec, JsError> {
    NaeSatSpec::random(4, 6, 2, &RngHandle::new(seed as u64, 11))
        .and_then(|s| s.to_lospec())
        .map_err(|e| JsError::new(&e.to_string()))
}

fn check_consistency(spec: &mdlab::distrib::LOSpec, x: &TokenSeq) -> bool {
    let latents: Vec<u32> = (0..spec.n_latent()).map(|i| x.get(spec.latent_position(i))).collect();
    (0..spec.n_obs())
        .all(|j| spec.observations()[j].prob(&latents, x.get(spec.obs_position(j))) > 0.0)
}

#[derive(Serialize)]
struct HistogramOut {
    labels: Vec<String>,
    exact: Vec<f64>,
    empirical: Vec<f64>,
    tv: f64,
}

/// Final-sample histogram of a decoding strategy against the exact law of
/// the demo spec.
#[wasm_bindgen]
pub fn lo_histogram(seed: u32, oracle: &str, n_samples: u32) -> Result<String, JsError> {
    let spec = demo_spec(seed)?;
    let denoiser = ExactDenoiser::new(spec.clone());
    let dist = spec.enumerate(1e6).map_err(|e| JsError::new(&e.to_string()))?;
    let oracle = oracle_by_name(oracle)?;
    let mut counts: std::collections::HashMap<Vec<u32>, u64> = std::collections::HashMap::new();
    for i in 0..n_samples {
        let h = RngHandle::new(seed as u64, 100_000 + i as u64);
        let initial = TokenSeq::all_mask(spec.len(), 2);
        let trace = match &oracle {
            None => vanilla_sample_from(&initial, &NoiseSchedule::Linear, &denoiser, 200, &h),
            Some(o) => {
                adaptive_sample_from(&initial, &NoiseSchedule::Linear, &denoiser, o, 200, &h)
            }
        }
        .map_err(|e| JsError::new(&e.to_string()))?;
        *counts.entry(trace.final_seq.tokens().to_vec()).or_insert(0) += 1;
    }
    let mut labels = Vec::new();
    let mut exact = Vec::new();
    let mut empirical = Vec::new();
    let mut tv = 0.0;
    for (atom, w) in dist.atoms() {
        let p_hat = counts
            .get(atom.tokens())
            .map(|&c| c as f64 / n_samples as f64)
            .unwrap_or(0.0);
        labels.push(atom.to_compact().map_err(|e| JsError::new(&e.to_string()))?);
        exact.push(*w);
        empirical.push(p_hat);
        tv += (p_hat - w).abs();
    }
    // Mass on sequences outside the support (possible only via batched
    // vanilla reveals).
    for (tokens, &c) in &counts {
        if dist.atoms().iter().all(|(a, _)| a.tokens() != tokens.as_slice()) {
            tv += c as f64 / n_samples as f64;
        }
    }
    Ok(to_json(&HistogramOut { labels, exact, empirical, tv: tv / 2.0 })?)
}

#[derive(Serialize)]
struct BpCurveOut {
    overlaps: Vec<f64>,
    converged: bool,
    baseline: f64,
    clauses: usize,
}

/// Belief propagation on a planted ternary NAE instance: overlap with the
/// hidden assignment after every sweep, from a random or planted start.
#[wasm_bindgen]
pub fn bp_overlap_curve(
    seed: u32,
    degree_over_k: f64,
    planted_init: bool,
    n_vars: u32,
) -> Result<String, JsError> {
    let pred = Predicate::nae(3, 3);
    let h = RngHandle::new(seed as u64, 5);
    let inst = bp::plant_csp(n_vars as usize, &pred, degree_over_k * 3.0, &h)
        .map_err(|e| JsError::new(&e.to_string()))?;
    let sigma = inst.sigma.clone().expect("planted");
    let runner = bp::BPRunner::new(&inst);
    let mut rng = h.substream(1).rng();
    let init = if planted_init {
        BpInit::Planted { delta: bp::PLANTED_INIT_DELTA }
    } else {
        BpInit::Random
    };
    let mut state = runner.init_state(init, &mut rng).map_err(|e| JsError::new(&e.to_string()))?;
    let mut overlaps = Vec::new();
    let mut converged = false;
    for _ in 0..300 {
        let (next, delta) = runner.step(&state, bp::BP_DAMPING).map_err(|e| JsError::new(&e.to_string()))?;
        state = next;
        let marg = runner.marginals(&state).map_err(|e| JsError::new(&e.to_string()))?;
        overlaps.push(bp::overlap(&sigma, &bp::round_marginals(&marg), 3));
        if delta < 1e-7 {
            converged = true;
            break;
        }
    }
    Ok(to_json(&BpCurveOut {
        overlaps,
        converged,
        baseline: 1.0 / 3.0,
        clauses: inst.clauses.len(),
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sudoku_roundtrip_native() {
        let out = sudoku_new(3, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let puzzle = v["puzzle"].as_str().unwrap();
        assert_eq!(puzzle.len(), 81);
        let trace = sudoku_trace(puzzle, "margin", 1).unwrap();
        let t: serde_json::Value = serde_json::from_str(&trace).unwrap();
        assert_eq!(t["solved"], true);
    }

    #[test]
    fn histogram_probabilities_normalize() {
        let out = lo_histogram(7, "margin", 500).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let exact: f64 = v["exact"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((exact - 1.0).abs() < 1e-9);
        assert!(v["tv"].as_f64().unwrap() < 0.2);
    }

    #[test]
    fn bp_curve_shapes() {
        let out = bp_overlap_curve(1, 75.0, false, 300).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(!v["overlaps"].as_array().unwrap().is_empty());
    }
}
