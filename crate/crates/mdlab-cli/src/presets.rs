//! Bundled experiment presets. Each maps to one of the standing experiments;
//! `mdlab run --preset <name>` executes it as-is and `mdlab presets show`
//! prints the JSON for tweaking.

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub json: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "loss-equivalence",
        summary: "subset-sum, any-order, and Monte Carlo losses agree on 20 random pairs",
        json: r#"{
  "kind": {
    "name": "loss_equivalence",
    "n_pairs": 20,
    "max_len": 6,
    "max_vocab": 3,
    "n_mc": 100000,
    "exact_tolerance": 1e-10
  },
  "seed": 20250106
}"#,
    },
    Preset {
        name: "sampling-identity",
        summary: "vanilla/top-probability/margin decoding all reproduce the data law (TV <= 0.02)",
        json: r#"{
  "kind": {
    "name": "sample_trace",
    "spec": { "kind": "nae", "n_latent": 4, "n_obs": 6, "vocab": 2, "seed": 11 },
    "n_steps": 600,
    "n_samples": 100000,
    "emit_traces": 3,
    "tv_check": { "tolerance": 0.02 }
  },
  "seed": 7011
}"#,
    },
    Preset {
        name: "nae-adaptive-rescue",
        summary: "latent-corrupted NAE infilling: margin beats vanilla by >= 5 points",
        json: r#"{
  "kind": {
    "name": "nae_sat_inference",
    "n_latent": 15,
    "n_obs": 150,
    "lambda": 0.5,
    "trials": 2000,
    "obs_mask_fraction": 0.3333333333333333,
    "n_steps": 64,
    "min_gap_pp": 5.0
  },
  "seed": 315
}"#,
    },
    Preset {
        name: "error-imbalance",
        summary: "subproblem error localizes on corrupted latent positions",
        json: r#"{
  "kind": {
    "name": "error_imbalance",
    "n_latent": 15,
    "n_obs": 150,
    "lambda": 0.5,
    "masked_latents": 8,
    "mask_reps": 50,
    "n_mc_per_mask": 20
  },
  "seed": 42
}"#,
    },
    Preset {
        name: "bp-scan-nae",
        summary: "ternary NAE degree scan across the easy/hard/impossible window",
        json: r#"{
  "kind": {
    "name": "bp_scan",
    "predicate": { "family": "nae", "vocab": 3, "arity": 3 },
    "degree_over_k_grid": [40, 45, 50, 55, 58, 61, 64, 68, 75],
    "n_vars": 3000,
    "reps": 5,
    "max_iters": 2000,
    "assertions": {
      "uninformative_up_to": [45, 0.05],
      "recovered_from": [70, 0.2, 0.05],
      "hard_window": [50, 64, 0.1]
    }
  },
  "seed": 64
}"#,
    },
    Preset {
        name: "bp-scan-coloring",
        summary: "planted 5-coloring sanity: lost at D=20, recovered at D=40",
        json: r#"{
  "kind": {
    "name": "bp_scan",
    "predicate": { "family": "coloring", "vocab": 5 },
    "degree_over_k_grid": [10, 20],
    "n_vars": 3000,
    "reps": 5,
    "max_iters": 2000,
    "assertions": {
      "uninformative_up_to": [10, 0.05],
      "recovered_from": [20, 0.2, 1.0]
    }
  },
  "seed": 5
}"#,
    },
    Preset {
        name: "bp-tree-exactness",
        summary: "converged BP equals enumeration on 50 random forests",
        json: r#"{
  "kind": {
    "name": "bp_scan",
    "predicate": { "family": "nae", "vocab": 3, "arity": 3 },
    "degree_over_k_grid": [],
    "n_vars": 12,
    "reps": 0,
    "max_iters": 1000,
    "tree_check": { "instances": 50, "n_vars": 12, "n_clauses": 4, "tolerance": 1e-8 }
  },
  "seed": 6
}"#,
    },
    Preset {
        name: "sudoku-singles",
        summary: "singles-only corpus: margin solves all, top probability beats random order",
        json: r#"{
  "kind": {
    "name": "sudoku_eval",
    "n_puzzles": 500,
    "ceiling": "singles_only",
    "n_steps": 81,
    "require_margin_all": true,
    "strictly_better": [["top_probability", "vanilla"]],
    "not_below": [["margin", "top_probability"]]
  },
  "seed": 81
}"#,
    },
    Preset {
        name: "sudoku-any",
        summary: "unrestricted corpus: margin >= top probability >= random order",
        json: r#"{
  "kind": {
    "name": "sudoku_eval",
    "n_puzzles": 500,
    "ceiling": "any",
    "n_steps": 81,
    "require_margin_all": false,
    "strictly_better": [["top_probability", "vanilla"]],
    "not_below": [["margin", "top_probability"], ["top_probability", "vanilla"]]
  },
  "seed": 82
}"#,
    },
    Preset {
        name: "sampler-stats",
        summary: "vanilla reveal counts are binomial; deterministic K is the rounded mean",
        json: r#"{
  "kind": {
    "name": "sample_trace",
    "spec": { "kind": "nae", "n_latent": 4, "n_obs": 6, "vocab": 2, "seed": 11 },
    "n_steps": 10,
    "n_samples": 0,
    "emit_traces": 0,
    "step_stats": { "masked": 20, "t": 0.5, "s": 0.25, "reps": 100000, "significance": 0.001 }
  },
  "seed": 9001
}"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
