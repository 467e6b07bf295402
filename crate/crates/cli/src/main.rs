mod commands;
mod inputs;
mod report;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{AtomicityArgs, ClassifyArgs, DescribeArgs, EvaluateArgs, Invocation, OptimizeArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Structured,
}

/// Flash-loan attack simulator, parameter optimizer and usage analytics.
#[derive(Debug, Parser)]
#[command(name = "flashopt", version)]
struct Cli {
    /// Seed for multi-start sampling, synthetic streams and bootstrap resampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Treat any violated residual as a failure (exit code 1).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximize a vector's objective and cross-check it on a grid.
    Optimize(OptimizeArgs),
    /// Run a vector at fixed parameters and print the full trace.
    Evaluate(EvaluateArgs),
    /// Sweep the profit difference between atomic and interrupted arbitrage.
    Atomicity(AtomicityArgs),
    /// Classify flash-loan records by touched platforms.
    Classify(ClassifyArgs),
    /// Summarize a scenario and, optionally, a vector's parameters and constraints.
    Describe(DescribeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Invocation {
        argv: std::env::args().skip(1).collect(),
        seed: cli.seed,
        strict: cli.strict,
    };
    let started = Instant::now();
    let outcome = match &cli.command {
        Command::Optimize(a) => commands::optimize(&ctx, a),
        Command::Evaluate(a) => commands::evaluate_cmd(&ctx, a),
        Command::Atomicity(a) => commands::atomicity(&ctx, a),
        Command::Classify(a) => commands::classify(&ctx, a),
        Command::Describe(a) => commands::describe(&ctx, a),
    };
    let mut outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    outcome.report.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    let body = match cli.format {
        Format::Text => outcome.text,
        Format::Csv => outcome.csv,
        Format::Structured => outcome.report.to_json(),
    };
    let mut stdout = std::io::stdout().lock();
    if stdout
        .write_all(body.as_bytes())
        .and_then(|_| stdout.flush())
        .is_err()
    {
        return ExitCode::from(2);
    }
    ExitCode::from(outcome.exit)
}
