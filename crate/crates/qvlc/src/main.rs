use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qvlc::harness::{execute, write_atomic, ExperimentConfig};
use qvlc::schur::IsotypicDecomposition;
use qvlc::Error;

/// Universal variable-length compression of quantum i.i.d. sources:
/// rate projectors, smeared grid codes, and exact finite-size accounting.
#[derive(Parser)]
#[command(name = "qvlc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output path ('-' for stdout).
    #[arg(long)]
    out: Option<String>,
    /// Output format: csv or json (default from config, else csv).
    #[arg(long)]
    format: Option<String>,
    /// Display nats-valued quantities in bits.
    #[arg(long)]
    bits: bool,
    /// Worker threads (1 = sequential; results are identical either way).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment in a configuration file.
    Run(RunArgs),
    /// Run a cartesian sweep (delta/delta-prime lists allowed; infeasible
    /// cells are flagged instead of failing).
    Sweep(RunArgs),
    /// Evaluate overflow exponents and the curvature constant directly.
    Exponent {
        /// Comma-separated eigenvalue distribution, e.g. "0.9,0.1".
        #[arg(short, long)]
        a: String,
        #[arg(long, default_value_t = 0.0)]
        r_min: f64,
        /// Default: ln d for the implied dimension.
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        bits: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Manage the on-disk projector cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Build and store decompositions for a range of block lengths.
    Build {
        #[arg(short, long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long)]
        n_max: usize,
        /// Cache directory (default: QVLC_CACHE_DIR).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Remove cached decomposition files.
    Clear {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

/// Exit codes: 0 ok, 2 config, 3 resources, 4 invariant breach,
/// 5 bound violation.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::CapExceeded(..) => 3,
        Error::SupportLeakage(_) | Error::ZeroRankOutcome(..) => 4,
        _ => 2,
    }
}

fn cache_dir(explicit: Option<PathBuf>) -> Result<PathBuf, String> {
    explicit
        .or_else(|| std::env::var_os("QVLC_CACHE_DIR").map(PathBuf::from))
        .ok_or_else(|| "no cache directory: pass --dir or set QVLC_CACHE_DIR".to_string())
}

fn render_and_emit(
    report: &qvlc::harness::SimulationReport,
    format: Option<&str>,
    out: Option<&str>,
    bits: bool,
) -> Result<(), String> {
    let rendered = match format.unwrap_or("csv") {
        "csv" => report.to_csv(bits),
        "json" => report.to_json().map_err(|e| e.to_string())?,
        other => return Err(format!("unknown format '{other}'")),
    };
    match out {
        None | Some("-") => print!("{rendered}"),
        Some(path) => {
            write_atomic(Path::new(path), &rendered).map_err(|e| e.to_string())?;
            eprintln!("wrote {path}");
        }
    }
    Ok(())
}

fn run_command(args: &RunArgs, sweep: bool) -> Result<u8, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut config = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return Ok(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    match execute(&config, sweep, args.jobs.max(1)) {
        Ok(report) => {
            let format = args
                .format
                .clone()
                .or_else(|| config.format.clone())
                .unwrap_or_else(|| "csv".to_string());
            let out = args.out.clone().or_else(|| config.out.clone());
            render_and_emit(&report, Some(&format), out.as_deref(), args.bits)?;
            if report.has_invariant_breach() {
                eprintln!("internal invariant breach; see rows with satisfied=false");
                Ok(4)
            } else if report.has_bound_violation() {
                eprintln!("bound violation; see rows with satisfied=false");
                Ok(5)
            } else {
                Ok(0)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(exit_for(&e))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn exponent_command(
    a: &str,
    r_min: f64,
    r_max: Option<f64>,
    steps: usize,
    out: Option<String>,
    format: Option<String>,
    bits: bool,
    seed: u64,
) -> Result<u8, String> {
    let parts: Result<Vec<f64>, _> = a.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let probs = parts.map_err(|e| format!("bad -a value: {e}"))?;
    let d = probs.len();
    let r_max = r_max.unwrap_or((d as f64).ln());
    let config_json = serde_json::json!({
        "mode": "exponent",
        "d": d,
        "a": probs,
        "rate_grid": {"min": r_min, "max": r_max, "steps": steps},
        "seed": seed,
    });
    let config = match ExperimentConfig::from_json(&config_json.to_string()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid exponent parameters: {e}");
            return Ok(2);
        }
    };
    let report = match execute(&config, false, 1) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit_for(&e));
        }
    };
    render_and_emit(&report, format.as_deref(), out.as_deref(), bits)?;
    Ok(0)
}

fn cache_command(action: &CacheAction) -> Result<u8, String> {
    match action {
        CacheAction::Build { d, n_min, n_max, dir } => {
            let dir = cache_dir(dir.clone())?;
            for n in *n_min..=*n_max {
                let dec = IsotypicDecomposition::build(n, *d)
                    .map_err(|e| format!("(n={n}, d={d}): {e}"))?;
                let dev = dec.max_deviations();
                if dev.worst() > 1e-9 || !dev.ranks_match {
                    return Err(format!(
                        "(n={n}, d={d}): decomposition fails checks: {dev:?}"
                    ));
                }
                let path = dec.write_to(&dir).map_err(|e| e.to_string())?;
                println!(
                    "built (n={n}, d={d}): {} blocks, worst deviation {:.2e} -> {}",
                    dec.blocks.len(),
                    dev.worst(),
                    path.display()
                );
            }
            Ok(0)
        }
        CacheAction::Clear { dir } => {
            let dir = cache_dir(dir.clone())?;
            let mut removed = 0usize;
            if dir.is_dir() {
                for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
                    let entry = entry.map_err(|e| e.to_string())?;
                    let name = entry.file_name().to_string_lossy().to_string();
                    if name.starts_with("swdecomp_v1_") && name.ends_with(".bin") {
                        std::fs::remove_file(entry.path()).map_err(|e| e.to_string())?;
                        removed += 1;
                    }
                }
            }
            println!(
                "removed {removed} cached decompositions from {}",
                dir.display()
            );
            Ok(0)
        }
    }
}

fn validate_command(path: &Path) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return 2;
        }
    };
    match ExperimentConfig::from_json(&text) {
        Ok(_) => {
            println!("ok");
            0
        }
        Err(e) => {
            eprintln!("invalid config: {e}");
            2
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(args) => run_command(args, false),
        Command::Sweep(args) => run_command(args, true),
        Command::Exponent {
            a,
            r_min,
            r_max,
            steps,
            out,
            format,
            bits,
            seed,
        } => exponent_command(
            a,
            *r_min,
            *r_max,
            *steps,
            out.clone(),
            format.clone(),
            *bits,
            *seed,
        ),
        Command::Cache { action } => cache_command(action),
        Command::Validate { config } => Ok(validate_command(config)),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
