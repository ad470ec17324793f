//! `mdlab` — config-driven experiment runner for the masked-diffusion lab.

mod config;
mod experiments;
mod presets;
mod report;
mod serve;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::{config_hash, ExperimentConfig, Manifest};

#[derive(Parser)]
#[command(name = "mdlab", version, about = "Masked-diffusion inference laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (JSON file or bundled preset).
    Run {
        /// Path to an experiment config JSON file.
        config: Option<PathBuf>,
        /// Name of a bundled preset (see `presets list`).
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Output directory; defaults to the config's `out_dir` or `runs/<hash>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a Markdown report for a finished run directory.
    Report { dir: PathBuf },
    /// Inspect bundled presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Serve the line-delimited JSON denoiser protocol on stdin/stdout.
    ServeUniform {
        #[arg(long, value_enum, default_value = "uniform")]
        mode: serve::ServeMode,
    },
    /// Generate a Sudoku corpus file (one puzzle per line, tab + solution).
    GenPuzzles {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "singles_only")]
        ceiling: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample sequences from a generator spec into compact text lines.
    GenDataset {
        /// Path to a generator spec JSON (kind nae/parity/slab).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names with one-line summaries.
    List,
    /// Print a preset's JSON config.
    Show { name: String },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, preset, out } => run(config, preset, out),
        Command::Report { dir } => {
            let (markdown, all_passed) = report::render(&dir)?;
            let path = dir.join("report.md");
            std::fs::write(&path, &markdown)?;
            print!("{markdown}");
            if !all_passed {
                std::process::exit(1);
            }
            Ok(())
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for p in presets::PRESETS {
                        println!("{:<22} {}", p.name, p.summary);
                    }
                }
                PresetAction::Show { name } => match presets::find(&name) {
                    Some(p) => println!("{}", p.json),
                    None => bail!("unknown preset '{name}'; see `mdlab presets list`"),
                },
            }
            Ok(())
        }
        Command::ServeUniform { mode } => serve::serve(mode),
        Command::GenPuzzles { n, ceiling, out, seed } => {
            let ceiling = match ceiling.as_str() {
                "singles_only" => mdlab::puzzles::StrategyCeiling::SinglesOnly,
                "any" => mdlab::puzzles::StrategyCeiling::Any,
                other => bail!("unknown ceiling '{other}' (singles_only | any)"),
            };
            let puzzles =
                mdlab::puzzles::generate_puzzles(n, ceiling, &mdlab::RngHandle::new(seed, 0))?;
            mdlab::puzzles::write_puzzle_file(&out, &puzzles)?;
            println!("wrote {} puzzles to {}", puzzles.len(), out.display());
            Ok(())
        }
        Command::GenDataset { spec, n, out, seed } => {
            let raw = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let cfg: mdlab::distrib::DistribConfig =
                serde_json::from_str(&raw).context("parsing generator spec")?;
            let lo = cfg.build()?;
            let mut lines = String::new();
            let handle = mdlab::RngHandle::new(seed, 0);
            for i in 0..n {
                let x = lo.sample(&handle.substream(i as u64));
                lines.push_str(&x.to_compact()?);
                lines.push('\n');
            }
            std::fs::write(&out, lines)?;
            println!("wrote {n} sequences to {}", out.display());
            Ok(())
        }
    }
}

fn run(config_path: Option<PathBuf>, preset: Option<String>, out: Option<PathBuf>) -> Result<()> {
    let (raw, origin) = match (&config_path, &preset) {
        (Some(path), None) => (
            std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
            path.display().to_string(),
        ),
        (None, Some(name)) => match presets::find(name) {
            Some(p) => (p.json.to_string(), format!("preset:{name}")),
            None => bail!("unknown preset '{name}'; see `mdlab presets list`"),
        },
        _ => bail!("provide a config path or --preset NAME"),
    };
    let config: ExperimentConfig = serde_json::from_str(&raw)
        .with_context(|| format!("parsing experiment config from {origin}"))?;
    let hash = config_hash(&config);
    let out_dir = out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&hash));

    eprintln!("running {origin} -> {}", out_dir.display());
    let started = Instant::now();
    let result = experiments::run_experiment(&config, &out_dir)?;
    let wall_ms = started.elapsed().as_millis();

    let manifest = Manifest {
        config: config.clone(),
        config_hash: hash,
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_ms,
        assertions: result.assertions.clone(),
        artifacts: result.artifacts.clone(),
    };
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let mut all_passed = true;
    for a in &result.assertions {
        let mark = if a.passed { "PASS" } else { "FAIL" };
        println!("{mark} {} — {}", a.name, a.detail);
        all_passed &= a.passed;
    }
    for artifact in &result.artifacts {
        println!("artifact: {}", out_dir.join(artifact).display());
    }
    if !all_passed {
        std::process::exit(1);
    }
    Ok(())
}
