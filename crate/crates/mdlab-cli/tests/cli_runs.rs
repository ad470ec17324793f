//! CLI behavior: deterministic artifacts, strict config parsing, report
//! rendering, and generator subcommands.

use std::path::Path;
use std::process::Command;

fn mdlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdlab"))
}

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("mdlab-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// A small, fast config used by several tests.
fn small_config() -> &'static str {
    r#"{
  "kind": {
    "name": "sample_trace",
    "spec": { "kind": "nae", "n_latent": 3, "n_obs": 4, "vocab": 2, "seed": 2 },
    "n_steps": 120,
    "n_samples": 4000,
    "emit_traces": 2,
    "tv_check": { "tolerance": 0.05 }
  },
  "seed": 99
}"#
}

#[test]
fn identical_configs_identical_artifacts() {
    let dir = tmp_dir("determinism");
    let config = dir.join("config.json");
    std::fs::write(&config, small_config()).unwrap();
    for out in ["a", "b"] {
        let status = mdlab()
            .args(["run"])
            .arg(&config)
            .args(["--out"])
            .arg(dir.join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for artifact in ["tv_distance.csv", "traces.jsonl"] {
        let a = std::fs::read(dir.join("a").join(artifact)).unwrap();
        let b = std::fs::read(dir.join("b").join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}

#[test]
fn unknown_config_fields_are_fatal() {
    let dir = tmp_dir("strict");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{"kind":{"name":"loss_equivalence","n_pairs":1,"max_len":3,"max_vocab":2,"n_mc":10,"exact_tolerance":1e-10,"typo":1},"seed":1}"#,
    )
    .unwrap();
    let output = mdlab().args(["run"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("typo") || stderr.contains("unknown field"), "{stderr}");
}

#[test]
fn report_renders_pass_lines_and_exit_codes() {
    let dir = tmp_dir("report");
    let config = dir.join("config.json");
    std::fs::write(&config, small_config()).unwrap();
    let out = dir.join("run");
    assert!(mdlab().args(["run"]).arg(&config).args(["--out"]).arg(&out).status().unwrap().success());

    let output = mdlab().args(["report"]).arg(&out).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("# mdlab run report"));
    assert!(text.contains("PASS"));
    assert!(out.join("report.md").exists());
    assert!(out.join("manifest.json").exists());

    // Reporting a directory without a manifest fails loudly.
    let missing = mdlab().args(["report"]).arg(dir.join("nope")).output().unwrap();
    assert!(!missing.status.success());
}

#[test]
fn failing_assertions_exit_nonzero() {
    let dir = tmp_dir("failing");
    let config = dir.join("config.json");
    // Impossible tolerance: TV can't be <= 0 with finite samples.
    std::fs::write(
        &config,
        r#"{
  "kind": {
    "name": "sample_trace",
    "spec": { "kind": "nae", "n_latent": 3, "n_obs": 4, "vocab": 2, "seed": 2 },
    "n_steps": 40,
    "n_samples": 200,
    "emit_traces": 0,
    "tv_check": { "tolerance": 0.0 }
  },
  "seed": 99
}"#,
    )
    .unwrap();
    let output = mdlab().args(["run"]).arg(&config).args(["--out"]).arg(dir.join("r")).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("FAIL"));
}

#[test]
fn presets_list_and_show() {
    let list = mdlab().args(["presets", "list"]).output().unwrap();
    assert!(list.status.success());
    let names = String::from_utf8_lossy(&list.stdout);
    for expected in [
        "loss-equivalence",
        "sampling-identity",
        "nae-adaptive-rescue",
        "error-imbalance",
        "bp-scan-nae",
        "bp-scan-coloring",
        "bp-tree-exactness",
        "sudoku-singles",
        "sudoku-any",
        "sampler-stats",
    ] {
        assert!(names.contains(expected), "missing preset {expected}");
    }
    let show = mdlab().args(["presets", "show", "sampler-stats"]).output().unwrap();
    assert!(show.status.success());
    let json: serde_json::Value =
        serde_json::from_slice(&show.stdout).expect("preset JSON parses");
    assert_eq!(json["kind"]["name"], "sample_trace");
}

#[test]
fn gen_puzzles_writes_readable_corpus() {
    let dir = tmp_dir("gen");
    let out = dir.join("corpus.txt");
    let status = mdlab()
        .args(["gen-puzzles", "--n", "3", "--ceiling", "singles_only", "--seed", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let mut fields = line.split('\t');
        assert_eq!(fields.next().unwrap().len(), 81);
        assert_eq!(fields.next().unwrap().len(), 81);
    }
}

#[test]
fn gen_dataset_emits_compact_lines() {
    let dir = tmp_dir("dataset");
    let spec = dir.join("spec.json");
    std::fs::write(&spec, r#"{"kind":"nae","n_latent":5,"n_obs":7,"vocab":2,"seed":3}"#).unwrap();
    let out = dir.join("data.txt");
    let status = mdlab()
        .args(["gen-dataset", "--n", "10", "--seed", "9", "--spec"])
        .arg(&spec)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().all(|l| l.len() == 12 && l.chars().all(|c| c == '1' || c == '2')));
}

#[test]
fn run_dir_contains_manifest_with_hash(){
    let dir = tmp_dir("manifest");
    let config = dir.join("config.json");
    std::fs::write(&config, small_config()).unwrap();
    let out = dir.join("r");
    assert!(mdlab().args(["run"]).arg(&config).args(["--out"]).arg(&out).status().unwrap().success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 16);
    assert!(manifest["assertions"].as_array().unwrap().len() >= 3);
    for artifact in manifest["artifacts"].as_array().unwrap() {
        assert!(Path::new(&out.join(artifact.as_str().unwrap())).exists());
    }
}
