//! The `afdc` command-line tool as a library, so tests can drive it in
//! process.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod selftest;

use args::{Cli, Command};
use commands::Ctx;

/// Text (or JSON) for stdout.
#[derive(Debug)]
pub struct Output(pub String);

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, missing files or invalid configs (exit 2).
    #[error("{0}")]
    Usage(String),
    /// A self-test invariant failed (exit 1); carries the full report.
    #[error("{0}")]
    Invariant(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) | CliError::Failure(_) => 1,
        }
    }
}

impl From<afdc::Error> for CliError {
    fn from(e: afdc::Error) -> Self {
        use afdc::Error::*;
        match e {
            Io(_) | Json(_) | Decode(_) | Config { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Selftest(_) => "selftest",
        Command::Synth => "synth",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Sweep(_) => "sweep",
        Command::Cost(_) => "cost",
    }
}

/// Runs one parsed invocation and writes its run manifest, also when the
/// command itself fails after the configuration was read.
pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let mut ctx = Ctx::new(name(&cli.command), cli.config.as_deref(), cli.seed, &cli.out)?;
    let result = match &cli.command {
        Command::Selftest(a) => {
            ctx.manifest.arg("inject_fault", a.inject_fault.as_deref().unwrap_or("none"));
            commands::selftest(a.inject_fault.as_deref(), cli.json)
        }
        Command::Synth => commands::synth(&mut ctx, cli.json),
        Command::Train(a) => commands::train(&mut ctx, a, cli.json),
        Command::Eval(a) => commands::eval(&mut ctx, a, cli.json),
        Command::Sweep(a) => commands::sweep(&mut ctx, a, cli.json),
        Command::Cost(a) => commands::cost_report(&mut ctx, a, cli.json),
    };
    ctx.manifest.arg("json", cli.json);
    ctx.manifest.arg("status", if result.is_ok() { "ok" } else { "failed" });
    ctx.manifest.write(&ctx.out)?;
    result
}
