use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use onesided::Mode;
use onesided_cli::{queries, search, sweep, with_pool, CheckOutcome, CliError, ExperimentConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "onesided", version, about = "One-sided dyadic operators and weights: queries and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Config file of key=value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    depth: Option<u32>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run the subcommand's checks and exit 4 if any fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One-sided and two-sided characteristics of the configured weight.
    Characteristic,
    /// Operator norm, weak estimates and bounds for the configured weight.
    Norm,
    /// Testing constants.
    Testing,
    /// Slicing, corona forest and the chain of estimates.
    Corona,
    /// Level-set profile of the restricted adjoint.
    Distribution,
    /// Sweep the family parameter.
    Sweep,
    /// Extremal search over signs and cascade weights.
    Search,
    /// Weak-type probe of the weighted one-sided maximal function.
    ProbeMaximal,
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut c = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        c.apply_text(&text)?;
    }
    let flags = [
        ("depth", common.depth.map(|v| v.to_string())),
        ("p", common.p.map(|v| v.to_string())),
        ("seed", common.seed.map(|v| v.to_string())),
        ("out", common.out.as_ref().map(|v| v.display().to_string())),
        ("threads", common.threads.map(|v| v.to_string())),
        ("mode", common.mode.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, &v).map_err(CliError::config)?;
        }
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        c.set(k, v).map_err(CliError::config)?;
    }
    Ok(c)
}

fn emit<T: Serialize>(value: &T, config: &ExperimentConfig, name: &str) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        onesided_cli::write_json(&dir.join(format!("{name}.json")), value)?;
    }
    Ok(())
}

fn run(command: Command, config: &ExperimentConfig) -> Result<Vec<CheckOutcome>, CliError> {
    Ok(match command {
        Command::Characteristic => {
            let r = queries::characteristic(config)?;
            emit(&r, config, "characteristic")?;
            queries::characteristic_checks(&r)
        }
        Command::Norm => {
            let r = queries::norm(config)?;
            emit(&r, config, "norm")?;
            queries::norm_checks(&r)
        }
        Command::Testing => {
            let r = queries::testing(config)?;
            emit(&r, config, "testing")?;
            queries::testing_checks(&r)
        }
        Command::Corona => {
            let r = queries::corona(config)?;
            emit(&r, config, "corona")?;
            queries::corona_checks(&r)
        }
        Command::Distribution => {
            let r = queries::distribution(config)?;
            emit(&r, config, "distribution")?;
            queries::distribution_checks(&r)
        }
        Command::Sweep => {
            let r = sweep::run_sweep(config)?;
            println!("{}", serde_json::to_string_pretty(&r.summary)?);
            sweep::sweep_checks(&r)
        }
        Command::Search => {
            let r = search::run_search(config)?;
            println!("{}", serde_json::to_string_pretty(&r.best)?);
            if r.budget_exhausted {
                eprintln!("budget exhausted after {} iterations; reporting best so far", r.iterations);
            }
            search::search_checks(&r)
        }
        Command::ProbeMaximal => {
            let r = onesided_cli::probe_weighted_maximal(config)?;
            eprintln!("{}", r.label);
            println!("{}", serde_json::to_string_pretty(&r)?);
            Vec::new()
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli.common).and_then(|config| {
        let checks = with_pool(config.threads, || run(cli.command, &config))??;
        if cli.common.check {
            let mut failed = 0;
            for c in &checks {
                eprintln!("[{}] {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.pass);
            }
            if failed > 0 {
                return Err(CliError::Check(format!("{failed} of {} checks failed", checks.len())));
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
