//! Reference denoiser server for the line-delimited JSON protocol: reads one
//! request per stdin line, answers uniform marginal rows for the masked
//! positions. The misbehaving modes exist so integrations can exercise their
//! validation and timeout paths.

use std::io::{BufRead, Write};

use anyhow::Result;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ServeMode {
    /// Uniform rows over the vocabulary.
    Uniform,
    /// Rows that sum to 0.9: a contract violation.
    Unnormalized,
    /// Accept requests but never answer.
    Silent,
}

#[derive(Deserialize)]
struct Request {
    id: u64,
    tokens: Vec<u32>,
    m: u32,
    #[allow(dead_code)]
    t: Option<f64>,
}

pub fn serve(mode: ServeMode) -> Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("bad request line: {e}");
                continue;
            }
        };
        if mode == ServeMode::Silent {
            continue;
        }
        let masked = req.tokens.iter().filter(|&&t| t == 0).count();
        let total = match mode {
            ServeMode::Uniform => 1.0,
            ServeMode::Unnormalized => 0.9,
            ServeMode::Silent => unreachable!(),
        };
        let row: Vec<f64> = vec![total / req.m as f64; req.m as usize];
        let rows: Vec<&Vec<f64>> = (0..masked).map(|_| &row).collect();
        let resp = serde_json::json!({ "id": req.id, "marginals": rows });
        writeln!(out, "{resp}")?;
        out.flush()?;
    }
    Ok(())
}
