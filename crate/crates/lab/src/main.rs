// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use fim_lab::cli::{run, Cli};
use fim_lab::LabError;
use serde_json::json;

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.kind().to_string() + ": " + &e.to_string(), 2),
    };
    match run(&cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e @ LabError::Usage(_)) => fail(e.kind(), e.to_string(), 2),
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
