//! Acceptance suite: one test per standing claim, each printing a PASS/FAIL
//! line with the measured quantity next to its pinned threshold.
//!
//! Everything here runs from fixed seeds; statistical tests are calibrated so
//! their thresholds hold deterministically for these seeds at the stated
//! sample sizes.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use mdlab::bp::{self, BpInit, Predicate, ScanSettings};
use mdlab::denoise::{
    corrupt, BlendTarget, CorruptionPolicy, Denoiser, ExactDenoiser, RandomTableDenoiser,
    SudokuDenoiser, TargetSelector, UniformDenoiser,
};
use mdlab::distrib::{EnumerableDist, LOSpec, NaeSatSpec};
use mdlab::infer::{
    adaptive_sample_from, k_schedule, vanilla_sample_from, vanilla_step, KMode, UnmaskOracle,
};
use mdlab::loss::{
    loss_any_order_exact, loss_elbo_mask_count_mc, loss_elbo_mc, loss_subset_exact,
    subproblem_error, DEFAULT_LOSS_BUDGET,
};
use mdlab::puzzles::{generate_puzzles, solve_rate, Strategy, StrategyCeiling};
use mdlab::seq::{MaskSet, NoiseSchedule, TokenSeq};
use mdlab::stats::{self, RunningStats};
use mdlab::RngHandle;

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "{criterion} failed: {detail}");
}

/// Criterion 1: the subset-sum and any-order losses agree to 1e-10 on 20
/// randomized (distribution, denoiser) pairs with L <= 6, m <= 3, and the
/// Monte Carlo ELBO estimate (1e5 samples) lands within 3 standard errors.
#[test]
fn criterion_1_loss_three_way_equivalence() {
    let rng = RngHandle::new(20250106, 0);
    let results: Vec<(f64, f64)> = (0..20usize)
        .into_par_iter()
        .map(|pair| {
            let h = rng.substream(pair as u64);
            let mut r = h.rng();
            let len = 2 + pair % 5; // 2..=6
            let vocab = 2 + (pair as u32 / 2) % 2; // 2..=3
            let data = EnumerableDist::random(len, vocab, &mut r);
            let denoiser = RandomTableDenoiser::new(vocab, 1000 + pair as u64);
            let subset = loss_subset_exact(&denoiser, &data, DEFAULT_LOSS_BUDGET).unwrap();
            let any = loss_any_order_exact(&denoiser, &data, DEFAULT_LOSS_BUDGET).unwrap();
            let mc = loss_elbo_mc(&denoiser, &data, &NoiseSchedule::Linear, 100_000, &h.substream(1))
                .unwrap();
            let mc2 =
                loss_elbo_mask_count_mc(&denoiser, &data, 100_000, &h.substream(2)).unwrap();
            let gap = (subset.value - any.value).abs();
            let z = ((mc.value - subset.value) / mc.stderr)
                .abs()
                .max(((mc2.value - subset.value) / mc2.stderr).abs());
            (gap, z)
        })
        .collect();
    let max_gap = results.iter().map(|r| r.0).fold(0.0f64, f64::max);
    let worst_z = results.iter().map(|r| r.1).fold(0.0f64, f64::max);
    report(
        "criterion 1 (loss three-way equivalence)",
        max_gap <= 1e-10 && worst_z <= 3.0,
        &format!("max |subset - any-order| = {max_gap:.3e} (tol 1e-10), worst MC |z| = {worst_z:.2} (tol 3)"),
    );
}

/// Criterion 2: with the exact denoiser on an (N=4, m=2, P=6) NAE spec, the
/// final-sample distributions of vanilla, margin-adaptive, and
/// top-probability-adaptive decoding each match the data law within TV 0.02
/// over 1e5 samples. Vanilla runs on a fine time grid so that same-step
/// reveals of dependent positions are rare.
#[test]
fn criterion_2_any_order_sampling_identity() {
    let nae = NaeSatSpec::random(4, 6, 2, &RngHandle::new(11, 0)).unwrap();
    let spec = nae.to_lospec().unwrap();
    let denoiser = Arc::new(ExactDenoiser::new(spec.clone()));
    let exact: HashMap<Vec<u32>, f64> = spec
        .enumerate(1e6)
        .unwrap()
        .atoms()
        .iter()
        .map(|(x, w)| (x.tokens().to_vec(), *w))
        .collect();
    let n_samples = 100_000usize;
    let n_steps = 600usize;
    let strategies: [(&str, Option<UnmaskOracle>); 3] = [
        ("vanilla", None),
        ("top-probability", Some(UnmaskOracle::top_probability())),
        ("margin", Some(UnmaskOracle::margin())),
    ];
    let mut all_pass = true;
    let mut detail = String::new();
    for (slot, (name, oracle)) in strategies.iter().enumerate() {
        let counts: HashMap<Vec<u32>, u64> = (0..n_samples)
            .into_par_iter()
            .fold(HashMap::new, |mut acc, i| {
                let h = RngHandle::new(7011, (1 + slot) as u64 * 1_000_000 + i as u64);
                let initial = TokenSeq::all_mask(spec.len(), spec.vocab());
                let trace = match oracle {
                    None => vanilla_sample_from(
                        &initial,
                        &NoiseSchedule::Linear,
                        denoiser.as_ref(),
                        n_steps,
                        &h,
                    ),
                    Some(oracle) => adaptive_sample_from(
                        &initial,
                        &NoiseSchedule::Linear,
                        denoiser.as_ref(),
                        oracle,
                        n_steps,
                        &h,
                    ),
                }
                .unwrap();
                *acc.entry(trace.final_seq.tokens().to_vec()).or_insert(0) += 1;
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                a
            });
        let mut tv = 0.0;
        for (tokens, &count) in &counts {
            tv += (count as f64 / n_samples as f64
                - exact.get(tokens).copied().unwrap_or(0.0))
            .abs();
        }
        for (tokens, p) in &exact {
            if !counts.contains_key(tokens) {
                tv += p;
            }
        }
        tv /= 2.0;
        all_pass &= tv <= 0.02;
        detail.push_str(&format!("{name} TV = {tv:.4}; "));
    }
    report(
        "criterion 2 (any-order sampling identity)",
        all_pass,
        &format!("{detail}tol 0.02 at {n_samples} samples"),
    );
}

fn latent_corrupted(spec: &LOSpec, lambda: f64) -> impl Denoiser + use<> {
    let latents: std::collections::BTreeSet<usize> = spec.latent_positions().into_iter().collect();
    corrupt(
        ExactDenoiser::new(spec.clone()),
        CorruptionPolicy {
            selector: TargetSelector::Positions(latents),
            lambda,
            blend: BlendTarget::Uniform,
        },
    )
}

/// Criterion 3: on the (N, P) = (15, 150) NAE spec with the exact denoiser
/// corrupted on latent positions (lambda = 0.5, uniform blend),
/// margin-adaptive infilling beats vanilla on masked-observation accuracy by
/// at least 5 points at 95% confidence over 2000 trials, and the subproblem
/// error is strictly positive on latent positions and zero on observations.
#[test]
fn criterion_3_error_imbalance_and_adaptive_rescue() {
    let seed = RngHandle::new(315, 0);
    let nae = NaeSatSpec::random(15, 150, 2, &seed.substream(0)).unwrap();
    let spec = nae.to_lospec().unwrap();
    let denoiser = Arc::new(latent_corrupted(&spec, 0.5));

    // Accuracy half: conditional infilling trials.
    let trials = 2000usize;
    let diffs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let h = seed.substream(1 + trial as u64);
            let mut r = h.rng();
            let x0 = spec.sample_with(&mut r);
            let mut mask: MaskSet = (0..15usize).collect();
            let mut scored = Vec::new();
            for j in 0..150usize {
                if r.gen::<f64>() < 1.0 / 3.0 {
                    mask.insert(15 + j);
                    scored.push(15 + j);
                }
            }
            let initial = x0.apply_mask(&mask).unwrap();
            let acc = |oracle: Option<UnmaskOracle>, stream: u64| {
                let trace = match oracle {
                    None => vanilla_sample_from(
                        &initial,
                        &NoiseSchedule::Linear,
                        denoiser.as_ref(),
                        64,
                        &h.substream(stream),
                    ),
                    Some(oracle) => adaptive_sample_from(
                        &initial,
                        &NoiseSchedule::Linear,
                        denoiser.as_ref(),
                        &oracle,
                        64,
                        &h.substream(stream),
                    ),
                }
                .unwrap();
                let hit = scored
                    .iter()
                    .filter(|&&pos| trace.final_seq.get(pos) == x0.get(pos))
                    .count();
                if scored.is_empty() {
                    1.0
                } else {
                    hit as f64 / scored.len() as f64
                }
            };
            (acc(Some(UnmaskOracle::margin()), 11), acc(None, 10))
        })
        .collect();
    let mut margin_acc = RunningStats::default();
    let mut vanilla_acc = RunningStats::default();
    let mut paired = RunningStats::default();
    for &(m, v) in &diffs {
        margin_acc.push(m);
        vanilla_acc.push(v);
        paired.push(m - v);
    }
    let lcb = paired.mean() - 1.645 * paired.stderr();
    report(
        "criterion 3a (adaptive rescue)",
        lcb >= 0.05,
        &format!(
            "margin {:.4}, vanilla {:.4}, paired gap {:.4}, 95% LCB {:.4} (needed 0.05)",
            margin_acc.mean(),
            vanilla_acc.mean(),
            paired.mean(),
            lcb
        ),
    );

    // Error-imbalance half: grouped masking profile, 8 latents + 80 obs.
    let mask_reps = 40usize;
    let per_rep: Vec<Vec<(usize, f64)>> = (0..mask_reps)
        .into_par_iter()
        .map(|rep| {
            let h = seed.substream(100_000 + rep as u64);
            let mut r = h.rng();
            let mut latents: Vec<usize> = (0..15).collect();
            let mut obs: Vec<usize> = (15..165).collect();
            for i in (1..latents.len()).rev() {
                latents.swap(i, r.gen_range(0..=i));
            }
            for i in (1..obs.len()).rev() {
                obs.swap(i, r.gen_range(0..=i));
            }
            let mask: MaskSet =
                latents[..8].iter().chain(obs[..80].iter()).copied().collect();
            subproblem_error(denoiser.as_ref(), &spec, &mask, 25, &h.substream(1)).unwrap()
        })
        .collect();
    let mut latent_min = f64::INFINITY;
    let mut obs_max: f64 = 0.0;
    for rep in &per_rep {
        for &(pos, err) in rep {
            if pos < 15 {
                latent_min = latent_min.min(err);
            } else {
                obs_max = obs_max.max(err);
            }
        }
    }
    report(
        "criterion 3b (error imbalance)",
        latent_min > 0.0 && obs_max == 0.0,
        &format!("min latent error {latent_min:.3e} (> 0), max observation error {obs_max:.3e} (= 0)"),
    );
}

/// Criterion 4: the ternary NAE threshold scan at N = 3000 shows (a) both
/// initializations at the uninformative baseline for axis <= 45, (b) both
/// recovered and agreeing for axis >= 70, and (c) a hard window point in
/// (50, 64) where the planted initialization beats the random one by 0.1.
#[test]
fn criterion_4_bp_threshold_phenomenology() {
    let pred = Predicate::nae(3, 3);
    let axis = [40.0, 45.0, 50.0, 55.0, 58.0, 61.0, 64.0, 68.0, 75.0];
    let grid: Vec<f64> = axis.iter().map(|v| v * 3.0).collect();
    let rows = bp::threshold_scan(
        &pred,
        &grid,
        3000,
        5,
        &ScanSettings::default(),
        &RngHandle::new(64, 0),
    )
    .unwrap();
    let cell = |a: f64, init: &str| {
        rows.iter()
            .find(|r| (r.avg_degree / 3.0 - a).abs() < 1e-9 && r.init == init)
            .map(|r| r.overlap_mean)
            .unwrap()
    };
    let baseline = 1.0 / 3.0;

    let mut low_dev: f64 = 0.0;
    for a in axis.iter().filter(|&&a| a <= 45.0) {
        for init in ["random", "planted"] {
            low_dev = low_dev.max((cell(*a, init) - baseline).abs());
        }
    }
    report(
        "criterion 4a (uninformative below the window)",
        low_dev <= 0.05,
        &format!("max |overlap - 1/3| = {low_dev:.4} for axis <= 45 (tol 0.05)"),
    );

    let mut high_min = f64::INFINITY;
    let mut high_gap: f64 = 0.0;
    for a in axis.iter().filter(|&&a| a >= 70.0) {
        let (r, p) = (cell(*a, "random"), cell(*a, "planted"));
        high_min = high_min.min(r.min(p));
        high_gap = high_gap.max((r - p).abs());
    }
    report(
        "criterion 4b (recovery above the window)",
        high_min > baseline + 0.2 && high_gap <= 0.05,
        &format!(
            "min overlap {high_min:.4} (needed > {:.4}), max init gap {high_gap:.4} (tol 0.05)",
            baseline + 0.2
        ),
    );

    let mut best_gap = f64::NEG_INFINITY;
    let mut best_axis = 0.0;
    for a in axis.iter().filter(|&&a| a > 50.0 && a < 64.0) {
        let gap = cell(*a, "planted") - cell(*a, "random");
        if gap > best_gap {
            best_gap = gap;
            best_axis = *a;
        }
    }
    report(
        "criterion 4c (hard window)",
        best_gap >= 0.1,
        &format!("max planted-minus-random gap {best_gap:.4} at axis {best_axis} (needed >= 0.1)"),
    );
}

/// Criterion 5: planted 5-coloring at N = 3000 — random-init BP overlap is
/// within 0.05 of 1/5 at D = 20 and above 0.4 at D = 40.
#[test]
fn criterion_5_planted_coloring_sanity() {
    let pred = Predicate::inequality(5);
    let rows = bp::threshold_scan(
        &pred,
        &[20.0, 40.0],
        3000,
        5,
        &ScanSettings::default(),
        &RngHandle::new(5, 0),
    )
    .unwrap();
    let random = |d: f64| {
        rows.iter()
            .find(|r| (r.avg_degree - d).abs() < 1e-9 && r.init == "random")
            .map(|r| r.overlap_mean)
            .unwrap()
    };
    let low = random(20.0);
    let high = random(40.0);
    report(
        "criterion 5 (planted coloring thresholds)",
        (low - 0.2).abs() <= 0.05 && high > 0.4,
        &format!("random-init overlap {low:.4} at D=20 (0.2 +- 0.05), {high:.4} at D=40 (> 0.4)"),
    );
}

/// Criterion 6: on 50 random acyclic instances (N <= 12), converged BP
/// marginals match the enumeration posterior within 1e-8 per entry.
#[test]
fn criterion_6_bp_tree_exactness() {
    let worst = (0..50usize)
        .into_par_iter()
        .map(|i| {
            let h = RngHandle::new(6, i as u64);
            let pred =
                if i % 2 == 0 { Predicate::nae(3, 3) } else { Predicate::inequality(3) };
            let n_vars = 8 + i % 5; // 8..=12
            let inst = bp::plant_tree_csp(n_vars, &pred, (n_vars - 1) / 2 / 2, &h).unwrap();
            let (state, converged) =
                bp::bp_run(&inst, BpInit::Random, 1000, 1e-12, 0.0, &h.substream(1)).unwrap();
            assert!(converged);
            let marg = bp::bp_marginals(&inst, &state).unwrap();
            let exact = bp::enumerate_csp_marginals(&inst, 1e9).unwrap();
            let mut worst: f64 = 0.0;
            for v in 0..inst.n_vars {
                for col in 0..3 {
                    worst = worst.max((marg.row(v)[col] - exact[v][col]).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    report(
        "criterion 6 (BP tree exactness)",
        worst <= 1e-8,
        &format!("max |BP - enumeration| = {worst:.3e} over 50 forests (tol 1e-8)"),
    );
}

/// Criterion 7: strategy ordering on generated corpora. Singles-only: margin
/// solves 100%, top-probability strictly beats random order, margin is not
/// below top-probability. Any-difficulty: margin >= top-probability >=
/// random order, strict where a gap exists, never significantly inverted.
#[test]
fn criterion_7_sudoku_strategy_ordering() {
    let denoiser = SudokuDenoiser::new();
    let n = 500usize;
    let run = |ceiling: StrategyCeiling, seed: u64| {
        let puzzles = generate_puzzles(n, ceiling, &RngHandle::new(seed, 0)).unwrap();
        let rate = |strategy: Strategy, stream: u64| {
            solve_rate(&puzzles, &denoiser, strategy, 81, &RngHandle::new(seed, stream)).unwrap()
        };
        (
            rate(Strategy::Adaptive(UnmaskOracle::margin_single()), 1),
            rate(
                Strategy::Adaptive(UnmaskOracle::top_probability().with_k_mode(KMode::Fixed(1))),
                2,
            ),
            rate(Strategy::Vanilla, 3),
        )
    };
    let successes = |rate: f64| (rate * n as f64).round() as u64;

    let (margin, top, vanilla) = run(StrategyCeiling::SinglesOnly, 81);
    let top_vs_vanilla = stats::superiority_p_value(successes(top), n as u64, successes(vanilla), n as u64);
    let margin_vs_top_inv =
        stats::superiority_p_value(successes(top), n as u64, successes(margin), n as u64);
    report(
        "criterion 7a (singles-only ordering)",
        margin == 1.0 && top_vs_vanilla < 0.05 && margin_vs_top_inv >= 0.05,
        &format!(
            "margin {margin:.4} (= 1), top {top:.4} > vanilla {vanilla:.4} (p = {top_vs_vanilla:.2e}), margin >= top (inversion p = {margin_vs_top_inv:.2})"
        ),
    );

    let (margin, top, vanilla) = run(StrategyCeiling::Any, 82);
    let top_vs_vanilla = stats::superiority_p_value(successes(top), n as u64, successes(vanilla), n as u64);
    let margin_vs_top_inv =
        stats::superiority_p_value(successes(top), n as u64, successes(margin), n as u64);
    let vanilla_vs_top_inv =
        stats::superiority_p_value(successes(vanilla), n as u64, successes(top), n as u64);
    report(
        "criterion 7b (any-difficulty ordering)",
        top_vs_vanilla < 0.05 && margin_vs_top_inv >= 0.05 && vanilla_vs_top_inv >= 0.05,
        &format!(
            "margin {margin:.4} >= top {top:.4} (inversion p = {margin_vs_top_inv:.2}) >= vanilla {vanilla:.4} (strict p = {top_vs_vanilla:.2e})"
        ),
    );
}

/// Criterion 8: vanilla per-step reveal counts are Binomial(masked, rate) by
/// chi-squared at significance 0.001 over 1e5 steps, and deterministic-K
/// adaptive scheduling reveals exactly the rounded expectation.
#[test]
fn criterion_8_sampler_statistics() {
    let sched = NoiseSchedule::Linear;
    let masked = 20usize;
    let (t, s) = (0.5, 0.25);
    let p = sched.unmask_prob(s, t).unwrap();
    let x = TokenSeq::all_mask(masked, 2);
    let uniform = UniformDenoiser { vocab: 2 };
    let reps = 100_000usize;
    let counts: Vec<u64> = (0..reps)
        .into_par_iter()
        .fold(
            || vec![0u64; masked + 1],
            |mut acc, rep| {
                let h = RngHandle::new(8, rep as u64);
                let y = vanilla_step(&x, s, t, &sched, &uniform, &h).unwrap();
                acc[masked - y.masked_count()] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; masked + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let ln_choose = |n: usize, k: usize| {
        stats::ln_gamma(n as f64 + 1.0)
            - stats::ln_gamma(k as f64 + 1.0)
            - stats::ln_gamma((n - k) as f64 + 1.0)
    };
    let expected: Vec<f64> = (0..=masked)
        .map(|k| {
            (ln_choose(masked, k) + k as f64 * p.ln() + (masked - k) as f64 * (1.0 - p).ln())
                .exp()
                * reps as f64
        })
        .collect();
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (obs, exp) = stats::merge_low_cells(&observed, &expected, 5.0);
    let test = stats::chi_squared_gof(&obs, &exp);
    report(
        "criterion 8a (vanilla reveal counts binomial)",
        test.p_value > 0.001,
        &format!("chi2 = {:.2} (dof {}), p = {:.4} over {reps} steps (sig 0.001)", test.statistic, test.dof, test.p_value),
    );

    let mut exact = true;
    let mut detail = String::new();
    for masked in [20usize, 11, 3, 1] {
        let k =
            k_schedule(masked, s, t, &sched, KMode::Deterministic, &RngHandle::new(9, 0)).unwrap();
        let expect = ((masked as f64 * p).round() as usize).clamp(1, masked);
        exact &= k == expect;
        detail.push_str(&format!("masked={masked}: K={k}/{expect}; "));
    }
    report("criterion 8b (deterministic K exact)", exact, &detail);
}
