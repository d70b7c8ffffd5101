use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "xlinear", version, about = "Gated linear forecaster with exogenous inputs")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all artifacts (overrides the config's `out_dir`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Random seed (overrides the config; default 2025).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report metrics on standardized values (default) or, with `false`, in original units.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub scaled_metrics: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoint, log and resolved config.
    Train {
        /// Dataset CSV (overrides the config's `data_path`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Dataset CSV (defaults to the path recorded in the checkpoint).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Forecast the S steps following the last L rows of a CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Steps to write; at most the checkpoint's horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Output file (default `<out-dir>/forecast.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train and test several ablation / gate-activation variants.
    Ablate {
        /// Comma-separated `ablation[:activation]` items, e.g. `full,endo_only,full:softmax`.
        #[arg(long, default_value = "full,endo_only,global_only")]
        variants: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write batch-averaged gate matrices for the last window of a CSV.
    ExportWeights {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Write an untrained checkpoint for the configured dataset.
    Init {
        /// All-zero weights instead of random initialization.
        #[arg(long)]
        zeros: bool,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> xlinear::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Train { data } => commands::train(g, data),
        Command::Eval { checkpoint, split, data } => commands::eval(g, &checkpoint, &split, data),
        Command::Predict {
            checkpoint,
            input,
            horizon,
            output,
        } => commands::predict(g, &checkpoint, &input, horizon, output),
        Command::Ablate { variants, data } => commands::ablate(g, &variants, data),
        Command::ExportWeights { checkpoint, input } => commands::export_weights(g, &checkpoint, &input),
        Command::Init { zeros, data } => commands::init(g, zeros, data),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
