use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use seqformer::Modality;
use seqformer_cli::commands::{self, PrepareArgs, TrainArgs};
use seqformer_cli::CliResult;

#[derive(Parser)]
#[command(name = "seqformer", version, about = "Glucose forecasting with a recurrent sigmoid-attention transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Single,
    Multi,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Single => Modality::Single,
            ModalityArg::Multi => Modality::Multi,
        }
    }
}

fn parse_ph(s: &str) -> Result<u32, String> {
    match s {
        "30" => Ok(30),
        "60" => Ok(60),
        _ => Err(format!("prediction horizon must be 30 or 60, got {s}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Window, split, scale and cache a directory of subject CSVs.
    Prepare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_ph)]
        ph: u32,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        /// Balance the training partition with SMOTE.
        #[arg(long)]
        augment: bool,
        /// Cache prefix; writes <out>.train, <out>.val and <out>.test.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model and write weights, state sidecar and history CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Force every loss weight to 1.
        #[arg(long)]
        unbalanced: bool,
        /// Defaults to the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a model on a test cache and write the metrics report.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Forecast from one window of exactly T rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        window: PathBuf,
    },
    /// Rank models from their PH 30 and PH 60 reports (FILE or NAME=FILE).
    Rank {
        #[arg(long, num_args = 2.., required = true)]
        reports: Vec<String>,
    },
    /// Flash and RAM estimate for a weight file.
    Footprint {
        #[arg(long)]
        model: PathBuf,
        /// Print canonical JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic CGM corpus, one CSV per subject.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        subjects: u32,
        #[arg(long, default_value_t = 6)]
        days: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Prepare { data, ph, modality, augment, out, seed } => {
            let summary =
                commands::prepare(&PrepareArgs { data, ph_minutes: ph, modality: modality.into(), augment, out, seed })?;
            println!("{summary}");
        }
        Command::Train { config, train, val, out, unbalanced, seed } => {
            let summary = commands::train(&TrainArgs { config, train, val, out, unbalanced, seed })?;
            println!("{summary}");
        }
        Command::Evaluate { model, test, report } => {
            println!("{}", commands::evaluate(&model, &test, &report)?.summary_line());
        }
        Command::Predict { model, window } => {
            let values: Vec<String> = commands::predict(&model, &window)?.iter().map(|v| format!("{v:.2}")).collect();
            println!("{}", values.join(","));
        }
        Command::Rank { reports } => {
            print!("{}", commands::format_ranking(&commands::rank(&reports)?));
        }
        Command::Footprint { model, json } => {
            let summary = commands::footprint(&model)?;
            if json {
                println!("{}", summary.to_json());
            } else {
                print!("{summary}");
            }
        }
        Command::Synth { out, subjects, days, seed } => {
            for path in commands::synth(&out, subjects, days, seed)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
