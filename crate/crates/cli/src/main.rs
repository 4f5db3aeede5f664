//! `promptprint` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 backend, 5 internal. Failures
//! print one JSON line to stderr: `{"error":KIND,"class":CLASS,"message":TEXT}`.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use promptprint::ErrorClass;

use crate::args::Cli;

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Backend => 4,
        ErrorClass::Internal => 5,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Usage => "usage",
        ErrorClass::Data => "data",
        ErrorClass::Backend => "backend",
        ErrorClass::Internal => "internal",
    }
}

/// Collapses a possibly multi-line message, dropping clap's usage footer.
fn one_line(message: &str) -> String {
    message
        .lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .trim_start_matches("error: ")
        .to_string()
}

fn report(kind: &str, class: ErrorClass, message: &str) -> ExitCode {
    let line = serde_json::json!({
        "error": kind,
        "class": class_name(class),
        "message": one_line(message),
    });
    eprintln!("{line}");
    ExitCode::from(exit_code(class))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) =>
        {
            e.exit()
        }
        Err(e) => return report("Usage", ErrorClass::Usage, &e.to_string()),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), e.class(), &e.to_string()),
    }
}
