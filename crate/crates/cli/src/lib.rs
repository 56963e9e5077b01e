//! Command-line front end: every subcommand prints one JSON report.
//!
//! Exit codes: 0 when every check passes, 1 when a certificate or
//! mathematical check fails, 2 on malformed input.

pub mod args;
pub mod commands;
pub mod report;

use std::io::Write;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command, OracleAction, WeightsAction};
use report::{write_atomic, RunReport, SCHEMA_VERSION};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Constants { .. } => "constants",
        Command::Seminorm { .. } => "seminorm",
        Command::Saturate { .. } => "saturate",
        Command::Certify { .. } => "certify",
        Command::Compose { .. } => "compose",
        Command::Invert { .. } => "invert",
        Command::Qift { .. } => "qift",
        Command::Oracle {
            action: OracleAction::Emit { .. },
        } => "oracle emit",
        Command::Weights {
            action: WeightsAction::Adjust { .. },
        } => "weights adjust",
        Command::FullPipeline { .. } => "full-pipeline",
    }
}

/// Run with `argv` (program name first), writing the report to `out` and
/// diagnostics to `err`.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return EXIT_PASS;
                }
                _ => EXIT_INPUT,
            };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    let start = Instant::now();
    let name = command_name(&cli.command);
    let outcome = match commands::execute(&cli.command, &cli.common) {
        Ok(o) => Ok(o),
        Err(e) if commands::is_input_error(&e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
        Err(e) => Err(e),
    };
    let report = match outcome {
        Ok(o) => RunReport {
            schema_version: SCHEMA_VERSION,
            command: name.to_string(),
            spec: o.spec,
            spec_hash: o.spec_hash,
            configuration: o.configuration,
            results: o.results,
            passed: o.passed,
            error: None,
            wall_time_s: None,
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            RunReport {
                schema_version: SCHEMA_VERSION,
                command: name.to_string(),
                spec: None,
                spec_hash: None,
                configuration: commands::bare_configuration(&cli.common),
                results: serde_json::Value::Null,
                passed: false,
                error: Some(e.to_string()),
                wall_time_s: None,
            }
        }
    };
    let report = RunReport {
        wall_time_s: cli.common.timing.then(|| start.elapsed().as_secs_f64()),
        ..report
    };
    if !report.passed {
        if let Some(checks) = report
            .results
            .get("certificate")
            .and_then(|c| c.get("checks"))
            .and_then(|c| c.as_array())
        {
            for c in checks.iter().filter(|c| c["passed"] == false) {
                let _ = writeln!(
                    err,
                    "failed check: {} {}",
                    c["name"].as_str().unwrap_or(""),
                    c["chart"].as_str().unwrap_or("")
                );
            }
        }
    }
    let text = report.to_canonical_json();
    if let Some(path) = &cli.common.json_out {
        if let Err(e) = write_atomic(path, &text) {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    if out.write_all(text.as_bytes()).is_err() {
        return EXIT_INPUT;
    }
    if report.passed {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// [`run`] inside a pool of `threads` workers.
pub fn run_with_threads<I, S>(argv: I, threads: usize, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = S> + Send,
    S: Into<std::ffi::OsString> + Clone,
{
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| run(argv, out, err)),
        Err(e) => {
            let _ = writeln!(err, "error: thread pool: {e}");
            EXIT_INPUT
        }
    }
}
