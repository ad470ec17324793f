//! Markdown rendering of a run directory.

use std::path::Path;

use anyhow::{Context, Result};

use crate::config::Manifest;

pub fn render(dir: &Path) -> Result<(String, bool)> {
    let manifest_path = dir.join("manifest.json");
    let raw = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&raw).context("parsing manifest.json")?;

    let mut out = String::new();
    out.push_str("# mdlab run report\n\n");
    out.push_str(&format!("- config hash: `{}`\n", manifest.config_hash));
    out.push_str(&format!("- seed: {}\n", manifest.seed));
    out.push_str(&format!("- version: {}\n", manifest.version));
    out.push_str(&format!("- wall time: {} ms\n", manifest.wall_ms));
    out.push_str("\n## Assertions\n\n");
    let mut all_passed = true;
    if manifest.assertions.is_empty() {
        out.push_str("(none configured)\n");
    }
    for a in &manifest.assertions {
        let mark = if a.passed { "PASS" } else { "FAIL" };
        all_passed &= a.passed;
        out.push_str(&format!("- **{mark}** — {} ({})\n", a.name, a.detail));
    }
    out.push_str("\n## Artifacts\n\n");
    for artifact in &manifest.artifacts {
        let exists = dir.join(artifact).exists();
        if !exists {
            all_passed = false;
        }
        out.push_str(&format!(
            "- `{artifact}`{}\n",
            if exists { "" } else { " (MISSING)" }
        ));
    }
    Ok((out, all_passed))
}
