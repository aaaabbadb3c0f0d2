use std::process::ExitCode;

use clap::Parser;
use lingan_cli::Cli;

/// Exit status when an all-pairs run finished with some pairs failed.
const PARTIAL_FAILURE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbosity() {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).format_target(false).init();
    match lingan_cli::run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            match outcome.failures {
                Some(list) => {
                    log::warn!("some pairs failed; see {}", list.display());
                    ExitCode::from(PARTIAL_FAILURE)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
