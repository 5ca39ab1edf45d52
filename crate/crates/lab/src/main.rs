use std::process::ExitCode;

use clap::Parser;
use effecterase_lab::cli::{run, Cli};
use effecterase_lab::logging;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout with status 0; usage errors are config errors.
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let err = effecterase_lab::LabError::config(first.to_string());
            eprintln!("{}", err.to_line());
            return ExitCode::from(2);
        }
    };
    logging::init(cli.log_level, !cli.no_color);
    match run(&cli) {
        Ok(outcome) => {
            let mut summary = outcome.summary;
            if let Some(dir) = outcome.run_dir {
                summary["run_dir"] = serde_json::json!(dir);
            }
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.to_line());
            ExitCode::from(e.class().code() as u8)
        }
    }
}
