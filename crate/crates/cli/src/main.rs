use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use consensus_core::ProtocolKind;
use consensus_forge::{parse_config, run_command, Command, Options};

/// Design and verify leader-following consensus gains over matrix-weighted
/// digraphs.
///
/// Exit status: 0 on success or PASS, 2 when a criterion fails or consensus
/// is not reached, 1 on usage, configuration or numeric errors.
#[derive(Debug, Parser)]
#[command(name = "consensus-forge", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report, trace and chart files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured protocol.
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<ProtocolKind>,
    /// Design K with poles at -rate * {1..n}, replacing any configured K.
    #[arg(long)]
    rate: Option<f64>,
    /// Seed for random initial states when the config gives none.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, String> {
    s.parse::<ProtocolKind>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let config = match parse_config(&cli.config) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    let options = Options {
        out: cli.out,
        protocol: cli.protocol,
        rate: cli.rate,
        seed: cli.seed,
    };
    match run_command(cli.command, &config, &options) {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.document).expect("serializable document");
            // a closed pipe (e.g. `| head`) is not an error of the run
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
