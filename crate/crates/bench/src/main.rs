use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slidefft_bench::commands::{bench_fft, bench_slide, predict, verify, Report};
use slidefft_bench::options::RunConfig;
use slidefft_bench::CliError;

/// Slide FFT on a simulated mesh of processing elements.
#[derive(Debug, Parser)]
#[command(name = "slidefft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Oracle, Parseval, permutation and k-consistency suites.
    Verify(RunConfig),
    /// Single-hop slide sweep over PE counts and elements per PE.
    BenchSlide(RunConfig),
    /// Distributed FFT sweep over wave exponents k.
    BenchFft(RunConfig),
    /// Closed-form efficiency for given a, b and m.
    Predict(RunConfig),
}

type Handler = fn(&RunConfig) -> Result<Report, CliError>;

fn run(command: Command) -> Result<Report, CliError> {
    let (handler, cfg): (Handler, RunConfig) = match command {
        Command::Verify(cfg) => (verify, cfg),
        Command::BenchSlide(cfg) => (bench_slide, cfg),
        Command::BenchFft(cfg) => (bench_fft, cfg),
        Command::Predict(cfg) => (predict, cfg),
    };
    let cfg = cfg.resolve()?;
    let report = handler(&cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &report.body)?,
        None => std::io::stdout().lock().write_all(report.body.as_bytes())?,
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(report) => ExitCode::from(report.status.code()),
        Err(e) => {
            eprintln!("slidefft: {e}");
            ExitCode::from(e.status().code())
        }
    }
}
