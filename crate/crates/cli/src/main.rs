//! `mvlstm` command-line tool.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Baseline;
use crate::config::{ReportFormat, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "mvlstm", version, about = "Multi-variable LSTM forecasting and variable attention analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV (overrides `input`)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Target column name (overrides `target`)
    #[arg(long)]
    target: Option<String>,
    /// Output directory (overrides `output_dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    /// Per-variable hidden dimension d
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Granger lag order
    #[arg(long)]
    lag: Option<usize>,
    /// Granger significance level
    #[arg(long)]
    level: Option<f64>,
    /// Attention histogram bins
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.bin, metrics.json, loss_curve.csv, predictions.csv
    Train {
        #[command(flatten)]
        o: Overrides,
    },
    /// Score a trained model on the test split, optionally against a baseline
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Attention report with Granger comparison
    Interpret {
        #[arg(long)]
        model: PathBuf,
        /// k for the top-k overlap (default: number of Granger-causal variables)
        #[arg(long)]
        top_k: Option<usize>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Pairwise Granger ranking of every exogenous column against the target
    Granger {
        #[command(flatten)]
        o: Overrides,
    },
    /// Generate a synthetic ARX series from a TOML spec
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient suite over the (N, d, T) grid
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn resolve(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &o.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = &o.target {
        cfg.target = Some(v.clone());
    }
    if let Some(v) = &o.out {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = o.window {
        cfg.train.window = v;
    }
    if let Some(v) = o.dim {
        cfg.train.per_var_dim = v;
    }
    if let Some(v) = o.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = o.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = o.lag {
        cfg.granger_lag = v;
    }
    if let Some(v) = o.level {
        cfg.granger_level = v;
    }
    if let Some(v) = o.bins {
        cfg.bins = v;
    }
    if let Some(v) = o.format {
        cfg.format = v;
    }
    if let Ok(v) = std::env::var("MVLSTM_THREADS") {
        cfg.train.threads = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("MVLSTM_THREADS must be a non-negative integer, got `{v}`")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let written = match cli.command {
        Command::Train { o } => commands::train(&resolve(&o)?)?,
        Command::Eval { model, baseline, o } => commands::eval(&resolve(&o)?, &model, baseline)?,
        Command::Interpret { model, top_k, o } => commands::interpret(&resolve(&o)?, &model, top_k)?,
        Command::Granger { o } => commands::granger(&resolve(&o)?)?,
        Command::Synth { spec, out } => commands::synth(&spec, &out)?,
        Command::Gradcheck { seed } => {
            commands::gradcheck(seed, &mut std::io::stdout())?;
            Vec::new()
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .map(|l| l.trim_start_matches("error: ").trim())
                .find(|l| !l.is_empty())
                .unwrap_or(&msg);
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
