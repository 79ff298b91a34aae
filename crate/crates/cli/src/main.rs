use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lasso_exact::experiments::{
    run_coverage_experiment, run_fixed_point_validation, run_qq_experiment, run_width_threshold_experiment, ExperimentConfig,
};
use lasso_exact::Error;

#[derive(Parser)]
#[command(name = "lasso-exact", version, about = "Lasso fixed-point theory and simulation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standardized debiased coordinates with and without the DOF adjustment.
    Qq(RunArgs),
    /// Single-coordinate coverage of the debiased, unadjusted and leave-one-out intervals.
    Coverage(RunArgs),
    /// Lasso risk and sparsity over an (n, μ) grid against the Gaussian width.
    Width(RunArgs),
    /// Fixed-point solution compared with simulated fits.
    Fixpoint(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch(_)
        | Error::SingularCovariance { .. }
        | Error::EmptySupport => 2,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 3,
    }
}

fn run(cmd: &Command) -> Result<PathBuf, Error> {
    let args = match cmd {
        Command::Qq(a) | Command::Coverage(a) | Command::Width(a) | Command::Fixpoint(a) => a,
    };
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").to_path_buf());
    match cmd {
        Command::Qq(_) => run_qq_experiment(&cfg)?.write(&out, &cfg)?,
        Command::Coverage(_) => run_coverage_experiment(&cfg)?.write(&out, &cfg)?,
        Command::Width(_) => run_width_threshold_experiment(&cfg)?.write(&out, &cfg)?,
        Command::Fixpoint(_) => run_fixed_point_validation(&cfg)?.write(&out, &cfg)?,
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(out) => {
            log::info!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::FixedPointNonConvergence { trace, .. } = &e {
                eprintln!("last iterates:");
                for r in trace.iter().rev().take(5).rev() {
                    eprintln!("  iter {} tau {:.6} zeta {:.6} risk {:.6} df {:.6}", r.iter, r.tau, r.zeta, r.risk, r.df);
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
