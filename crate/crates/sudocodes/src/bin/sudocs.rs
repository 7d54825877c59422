//! Experiment runner. Picks an experiment by name, resolves its
//! configuration (built-in defaults, optionally replaced by a JSON file and
//! overridden by flags), executes it, and reports the artifact manifest and
//! per-experiment checks.
//!
//! Exit codes: 0 on success, 2 on a configuration error, 3 on numerical
//! divergence, 4 when `--check` is passed and a check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sudocodes::error::Error;
use sudocodes::harness::{config_hash, run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "sudocs",
    version,
    about = "Two-stage sparse-recovery experiments: fast zero identification \
             composed with message passing or one-bit descent"
)]
struct Cli {
    /// Experiment to run: verify-independence, verify-gaussianity,
    /// prior-approx, sweep, verify-tradeoff, onebit-noiseless,
    /// onebit-noisy, or fit-runtime.
    experiment: String,

    /// JSON configuration file; omitted fields take the experiment's
    /// defaults. Without this flag the built-in configuration runs.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for CSV tables and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base seed; trial t runs at a seed derived from (base, t).
    #[arg(long, value_name = "U64")]
    seed_base: Option<u64>,

    /// Number of trials per configuration point.
    #[arg(long, value_name = "K")]
    trials: Option<usize>,

    /// Worker threads for concurrent trials (default: all cores).
    #[arg(long, value_name = "T")]
    threads: Option<usize>,

    /// Evaluate the experiment's pass/fail checks and exit nonzero if any
    /// fails.
    #[arg(long)]
    check: bool,

    /// Print the fully resolved configuration as JSON and exit without
    /// running.
    #[arg(long)]
    print_config: bool,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let kind: ExperimentKind = cli.experiment.parse().map_err(|e| format!("{e}"))?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?;
            if cfg.experiment != kind {
                return Err(format!(
                    "config file is for '{}' but '{}' was requested",
                    cfg.experiment, kind
                ));
            }
            cfg
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed_base {
        cfg.seed_base = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    cfg.validate().map_err(|e| format!("{e}"))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    }

    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    if cli.print_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&cfg).expect("config serializes infallibly")
        );
        return ExitCode::SUCCESS;
    }

    println!("experiment  {}", cfg.experiment);
    println!("config hash {}", config_hash(&cfg));
    let report = match run_experiment(&cfg) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Diverged(_) => 3,
                Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::InvalidDimension(_)
                | Error::DimensionMismatch(_)
                | Error::DensityTooHigh(_) => 2,
                _ => 1,
            };
            return ExitCode::from(code);
        }
    };

    println!("manifest    {}", report.manifest_path.display());
    let mut all_passed = true;
    for check in &report.checks {
        all_passed &= check.passed;
        let verdict = if check.passed { "pass" } else { "FAIL" };
        if check.detail.is_empty() {
            println!("[{verdict}] {}", check.name);
        } else {
            println!("[{verdict}] {} ({})", check.name, check.detail);
        }
    }

    if cli.check && !all_passed {
        eprintln!("error: one or more checks failed");
        return ExitCode::from(4);
    }
    ExitCode::SUCCESS
}
