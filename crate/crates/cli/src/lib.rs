//! Experiment runner for `onesided`: single-weight queries, parameter sweeps,
//! extremal search and the weighted maximal probe, with CSV / JSONL / JSON
//! output.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub mod config;
pub mod probe;
pub mod queries;
pub mod search;
pub mod sweep;

pub use config::{ExperimentConfig, SignPolicy, SweepParam};
pub use probe::{probe_weighted_maximal, ProbeMaximalReport, ProbeRow, EVIDENCE_LABEL};
pub use search::{run_search, SearchReport, SearchStep, SearchWitness};
pub use sweep::{run_sweep, SweepOutcome, SweepRow, SweepSummary};

/// Largest depth any subcommand accepts.
pub const MAX_EXPERIMENT_DEPTH: u32 = 14;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("resource guard: {0}")]
    Resource(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Core(onesided::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            line: None,
            message: message.into(),
        }
    }

    /// `2` config, `3` resource guard, `4` failed check, `1` anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Resource(_) => 3,
            CliError::Check(_) => 4,
            _ => 1,
        }
    }
}

impl From<onesided::Error> for CliError {
    fn from(e: onesided::Error) -> Self {
        use onesided::Error as E;
        match e {
            E::Parse { line, message } => CliError::Config {
                line: Some(line),
                message,
            },
            E::Resource(m) => CliError::Resource(m),
            E::Depth { depth, max, .. } if depth > max => CliError::Resource(e.to_string()),
            E::Depth { .. } | E::NonIntegrable(_) => CliError::config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn guard_depth(config: &ExperimentConfig) -> Result<()> {
    if config.depth > MAX_EXPERIMENT_DEPTH {
        return Err(CliError::Resource(format!(
            "depth {} exceeds the experiment limit {MAX_EXPERIMENT_DEPTH}",
            config.depth
        )));
    }
    Ok(())
}

/// Private RNG stream for task `index` under `seed`.
pub fn task_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Run `f` on a pool with `threads` workers (`0`: rayon default).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Resource(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Least-squares slope of `y` against `x`; `None` with fewer than two
/// distinct `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// One named pass/fail line of a `--check` run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
