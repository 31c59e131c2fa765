use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hcascade_cli::serve::cmd_serve;
use hcascade_cli::{cmd_errormodel, cmd_run, cmd_synth, CliResult};

#[derive(Parser)]
#[command(name = "hcascade", version, about = "Coarse-to-fine detection cascade experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the baseline and the cascade over a dataset and write a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Evaluate the feature-overlap error model for a class pair.
    Errormodel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve simulated detections over the JSON-lines detector protocol.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Derive the detector seed from `seed` and this tag, as `run` does.
        #[arg(long)]
        tag: Option<String>,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let path = cmd_synth(&config, seed, &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Run {
            config,
            seed,
            out,
            threads,
        } => {
            let outcome = cmd_run(&config, seed, out.as_deref(), threads)?;
            eprintln!("wrote {}", outcome.out.display());
        }
        Command::Errormodel { config, seed, out } => {
            let summary = cmd_errormodel(&config, seed, &out)?;
            eprintln!("bayes error {}", summary.bayes_error);
        }
        Command::Serve {
            dataset,
            profile,
            seed,
            tag,
        } => cmd_serve(&dataset, &profile, seed, tag.as_deref(), io::stdin().lock(), io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
