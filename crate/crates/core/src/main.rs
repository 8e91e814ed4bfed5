use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use dris::experiments::{
    emit_report, oracle_rows, render_report, run_experiment, ExperimentConfig, ExperimentError,
    ReportFormat,
};

/// Worker-count override; unset means one worker per core.
const WORKERS_ENV: &str = "DRIS_WORKERS";

#[derive(Parser)]
#[command(name = "dris", version, about = "Worst-case rare-event probability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the macroreplication experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report path; defaults to the config's output_path, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the output extension (.json gives JSON), else CSV.
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Quadrature values of (u*, p*) for one- and two-dimensional targets.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("invalid {WORKERS_ENV}: {0}")]
    Workers(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Experiment(ExperimentError::InvalidConfig(_)) => "invalid_config",
            Self::Experiment(ExperimentError::Read { .. } | ExperimentError::Json(_)) => "config_read",
            Self::Experiment(ExperimentError::Write { .. } | ExperimentError::Csv(_)) => "output",
            Self::Experiment(ExperimentError::EmptyReport) => "empty_report",
            Self::Experiment(_) => "numerical",
            Self::Workers(_) | Self::Pool(_) => "environment",
        }
    }
}

fn init_workers() -> Result<(), CliError> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Workers(value.clone()))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_workers()?;
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            seed,
            samples,
            reps,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(n) = samples {
                cfg.n_samples = n;
            }
            if let Some(r) = reps {
                cfg.n_macroreps = r;
            }
            if out.is_some() {
                cfg.output_path = out;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            match &cfg.output_path {
                Some(path) => {
                    let format = format.unwrap_or_else(|| ReportFormat::from_path(path));
                    emit_report(&report, format, path)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{}", render_report(&report, format.unwrap_or(ReportFormat::Csv))?),
            }
            for note in &report.notes {
                eprintln!("note: {note}");
            }
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("r,x1_star,u,u_sq,p");
            for row in oracle_rows(&cfg)? {
                println!("{:e},{:e},{:e},{:e},{:e}", row.r, row.x1_star, row.u, row.u_sq, row.p);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
