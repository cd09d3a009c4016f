//! Argument handling, exit codes and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use fracobs::exec::Exec;
use fracobs::Error;

use crate::config::{emit_config, parse_config, Command, ConfigError, ExperimentConfig};
use crate::run::{execute, Artifacts};

pub const EXIT_OK: i32 = 0;
/// Output directory or files could not be written.
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
/// Numerical failure, including a failing `verify` check.
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fracobs", version, about = "Nonlocal and fractional obstacle problems in one dimension")]
pub struct Args {
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "fracobs-out")]
    pub out: PathBuf,
    /// Worker threads; 1 runs every loop sequentially.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FRACOBS_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Usage(_) => EXIT_VALIDATION,
        Error::NumericalFailure(_) | Error::Infeasible(_) | Error::Refused(_) => EXIT_NUMERICAL,
    }
}

pub fn main_with(args: Args) -> i32 {
    init_logging();
    let exec = match args.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_VALIDATION;
        }
        Some(1) => Exec::Sequential,
        Some(t) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                log::warn!("thread pool already initialized: {e}");
            }
            Exec::Parallel
        }
        None => Exec::Parallel,
    };
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return EXIT_VALIDATION;
        }
    };
    let cfg = match parse_config(&text, args.command) {
        Ok(c) => c,
        Err(e) => {
            report_config_error(&args.config, &e);
            return EXIT_VALIDATION;
        }
    };
    log::info!("running {} with n = {}, s = {}", cfg.command, cfg.n, cfg.s);
    let start = Instant::now();
    let outcome = execute(&cfg, exec);
    let total = start.elapsed().as_secs_f64();

    let (code, status, art, error) = match outcome {
        Ok(art) => {
            let (code, status) = match (art.passed, art.converged) {
                (Some(false), _) => (EXIT_NUMERICAL, "failed_checks"),
                (_, false) => (EXIT_NOT_CONVERGED, "not_converged"),
                _ => (EXIT_OK, "ok"),
            };
            (code, status, art, None)
        }
        Err(e) => (exit_code(&e), "error", Artifacts::default(), Some(e.to_string())),
    };
    if let Some(msg) = &error {
        eprintln!("error: {msg}");
    }
    print!("{}", art.stdout);
    if let Err(e) = write_outputs(&args.out, &cfg, &art, status, code, error.as_deref(), args.threads, total) {
        eprintln!("error: cannot write outputs to {}: {e}", args.out.display());
        return EXIT_IO;
    }
    if code == EXIT_NOT_CONVERGED {
        eprintln!("warning: solver did not converge; see {}", args.out.join("metadata.json").display());
    }
    code
}

fn report_config_error(path: &Path, e: &ConfigError) {
    eprintln!("error: {}: {e}", path.display());
}

/// Metadata is a pure function of the config, the results and the thread count; wall-clock
/// timings go to a separate file so repeated runs compare byte for byte.
pub fn metadata(cfg: &ExperimentConfig, art: &Artifacts, status: &str, code: i32, error: Option<&str>, threads: Option<usize>) -> Value {
    let config: Value = serde_json::from_str(&emit_config(cfg)).expect("emitted config is JSON");
    let mut outputs: Vec<String> = art.tables.iter().map(|t| t.file.clone()).collect();
    if art.matrix.is_some() {
        outputs.push("matrix.csv".into());
    }
    json!({
        "tool": "fracobs",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "threads": threads,
        "status": status,
        "exit_code": code,
        "error": error,
        "converged": art.converged,
        "config": config,
        "defaulted": cfg.defaulted,
        "clamp": art.clamp.map(|c| json!({
            "clamped": c.clamped,
            "total": c.total,
            "max": c.max,
            "unclamped_positive": c.unclamped_positive,
        })),
        "summary": art.summary,
        "outputs": outputs,
        "timings_file": "timings.json",
    })
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    out: &Path,
    cfg: &ExperimentConfig,
    art: &Artifacts,
    status: &str,
    code: i32,
    error: Option<&str>,
    threads: Option<usize>,
    total: f64,
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    for t in &art.tables {
        fs::write(out.join(&t.file), t.to_csv())?;
    }
    if let Some(m) = &art.matrix {
        fs::write(out.join("matrix.csv"), m)?;
    }
    let meta = metadata(cfg, art, status, code, error, threads);
    fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    let phases: serde_json::Map<String, Value> = art.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let timings = json!({ "total_seconds": total, "phases_seconds": phases });
    fs::write(out.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;
    Ok(())
}
