//! External-process denoiser speaking line-delimited JSON.
//!
//! Wire protocol, one JSON object per line over the child's stdin/stdout:
//!
//! ```text
//! request:  {"id": 7, "tokens": [0, 3, 0, 1], "m": 4, "t": null}
//! response: {"id": 7, "marginals": [[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.25, 0.25]]}
//! ```
//!
//! The response carries one row per *masked* position of the request, in
//! ascending position order. Rows must be length `m` and sum to 1 within the
//! marginal-table tolerance; anything else is a protocol error. Requests are
//! serialized per subprocess; pool several denoisers for parallelism.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::seq::{MarginalTable, TokenSeq, ROW_SUM_TOL};

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: u64,
    tokens: &'a [u32],
    m: u32,
    t: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct Response {
    pub id: u64,
    pub marginals: Vec<Vec<f64>>,
}

/// How to launch and supervise the subprocess.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Per-request response deadline.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Kill and respawn the child after a transport error or timeout.
    #[serde(default = "default_true")]
    pub restart_on_error: bool,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_true() -> bool {
    true
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            timeout_ms: default_timeout_ms(),
            restart_on_error: true,
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

struct Worker {
    child: Child,
    stdin: std::process::ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(cmd: &ExternalCommand) -> Result<Self> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self { child, stdin, lines: rx })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A denoiser served by a subprocess.
pub struct ExternalDenoiser {
    cmd: ExternalCommand,
    time_hint: Option<f64>,
    state: Mutex<ExternalState>,
}

struct ExternalState {
    worker: Option<Worker>,
    next_id: u64,
}

impl ExternalDenoiser {
    pub fn new(cmd: ExternalCommand) -> Self {
        Self {
            cmd,
            time_hint: None,
            state: Mutex::new(ExternalState { worker: None, next_id: 0 }),
        }
    }

    /// Sets the optional `t` field sent with every request, for models that
    /// condition on the noise level.
    pub fn with_time_hint(mut self, t: f64) -> Self {
        self.time_hint = Some(t);
        self
    }

    fn round_trip(&self, x: &TokenSeq) -> Result<Response> {
        let mut state = self.state.lock().expect("external denoiser lock");
        if state.worker.is_none() {
            state.worker = Some(Worker::spawn(&self.cmd)?);
        }
        state.next_id += 1;
        let id = state.next_id;
        let request = Request { id, tokens: x.tokens(), m: x.vocab(), t: self.time_hint };
        let line = serde_json::to_string(&request)?;
        let outcome = (|| -> Result<Response> {
            let worker = state.worker.as_mut().expect("spawned above");
            worker.stdin.write_all(line.as_bytes())?;
            worker.stdin.write_all(b"\n")?;
            worker.stdin.flush()?;
            let deadline = std::time::Instant::now() + self.cmd.timeout();
            loop {
                let remaining = deadline
                    .checked_duration_since(std::time::Instant::now())
                    .ok_or(Error::Timeout(self.cmd.timeout()))?;
                match worker.lines.recv_timeout(remaining) {
                    Ok(Ok(raw)) => {
                        let resp: Response = serde_json::from_str(raw.trim()).map_err(|e| {
                            Error::Protocol(format!("bad response line: {e}"))
                        })?;
                        if resp.id == id {
                            return Ok(resp);
                        }
                        // Stale response from a timed-out predecessor; skip.
                        if resp.id > id {
                            return Err(Error::Protocol(format!(
                                "response id {} from the future (awaiting {id})",
                                resp.id
                            )));
                        }
                    }
                    Ok(Err(e)) => return Err(Error::Io(e)),
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(Error::Timeout(self.cmd.timeout()))
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        return Err(Error::Protocol("subprocess closed stdout".into()))
                    }
                }
            }
        })();
        if outcome.is_err() && self.cmd.restart_on_error {
            state.worker = None;
        }
        outcome
    }
}

/// Validates a response against the request's mask pattern and assembles the
/// marginal table. Split out so protocol conformance is testable without a
/// subprocess.
pub fn assemble_table(x: &TokenSeq, resp: &Response) -> Result<MarginalTable> {
    let masked = x.masked_positions();
    if resp.marginals.len() != masked.len() {
        return Err(Error::Protocol(format!(
            "expected {} marginal rows, got {}",
            masked.len(),
            resp.marginals.len()
        )));
    }
    let m = x.vocab() as usize;
    let mut table = MarginalTable::zeros(x.len(), x.vocab());
    for (&pos, row) in masked.iter().zip(&resp.marginals) {
        if row.len() != m {
            return Err(Error::Protocol(format!(
                "row for position {pos} has length {}, expected {m}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Protocol(format!(
                "row for position {pos} is not a distribution (sum={sum})"
            )));
        }
        table.set_row(pos, row);
    }
    Ok(table)
}

impl Denoiser for ExternalDenoiser {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        let resp = self.round_trip(x)?;
        assemble_table(x, &resp)
    }

    fn descriptor(&self) -> String {
        format!("external({})", self.cmd.program)
    }
}
