use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aste_table::cli;
use clap::{Parser, Subcommand};

/// Aspect sentiment triplet extraction by boundary-driven table filling.
#[derive(Parser)]
#[command(name = "aste", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write the best checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on a triplet file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write per-sentence predictions in the input grammar.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Extract triplets from one whitespace-tokenized sentence.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
    },
    /// Describe a checkpoint or the statistics of a triplet file.
    Inspect {
        #[arg(long, required_unless_present = "data")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Compare against published counts, e.g. `--dataset 14res --split train`.
        #[arg(long, requires = "split", requires = "data")]
        dataset: Option<String>,
        #[arg(long, requires = "dataset")]
        split: Option<String>,
    },
}

fn run(cmd: Cmd, out: &mut dyn Write) -> aste_table::Result<bool> {
    match cmd {
        Cmd::Train { config } => cli::cmd_train(&config, out).map(|_| true),
        Cmd::Eval {
            checkpoint,
            data,
            output,
        } => cli::cmd_eval(&checkpoint, &data, output.as_deref(), out).map(|_| true),
        Cmd::Predict { checkpoint, text } => cli::cmd_predict(&checkpoint, &text, out).map(|_| true),
        Cmd::Inspect {
            checkpoint,
            data,
            dataset,
            split,
        } => {
            if let Some(c) = checkpoint {
                cli::inspect_checkpoint(&c, out)?;
            }
            match data {
                Some(d) => {
                    let reference = dataset.as_deref().zip(split.as_deref());
                    cli::inspect_data(&d, reference, out)
                }
                None => Ok(true),
            }
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(args.cmd, &mut out) {
        Ok(true) => ExitCode::SUCCESS,
        // statistics did not match the published counts
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
