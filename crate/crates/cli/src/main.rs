use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use shocklab_cli::{run_scenario, thread_cap, Failure, Mode, Overrides, RunConfig, DEFAULTS_HELP, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "shocklab",
    version,
    about = "Viscous shock a-contraction lab for u_t + (u^p)_x = u_xx",
    after_help = DEFAULTS_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file (defaults are used when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the random certifier pairs and Poincare battery.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Suppress the human-readable summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Tabulate the traveling-wave profile (profile.csv: xi,U,Uxi).
    Profile,
    /// Certify g(U) <= -beta < 0 over a parameter sweep (certificates.json).
    Certify,
    /// Run the coupled shock/shift solver (timeseries.csv, summary.json).
    Simulate,
    /// Simulate and fit the t^(-1/4) decay constant (timeseries.csv, decay.json).
    Decay,
    /// Seeded battery for the weighted Poincare inequality (poincare.json).
    Poincare,
    /// Steady-profile residual order at several spacings (convergence.json).
    Convergence,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Profile => Mode::Profile,
            Command::Certify => Mode::Certify,
            Command::Simulate => Mode::Simulate,
            Command::Decay => Mode::Decay,
            Command::Poincare => Mode::Poincare,
            Command::Convergence => Mode::Convergence,
        }
    }
}

fn fail(failure: &Failure, mode: Option<Mode>) -> ExitCode {
    eprintln!("{}", failure.record(mode));
    ExitCode::from(failure.code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let failure = Failure {
                code: EXIT_CONFIG,
                kind: "UsageError".into(),
                message: e.kind().to_string(),
                detail: None,
            };
            return fail(&failure, None);
        }
    };
    let mode = cli.command.mode();
    match thread_cap(std::env::var("SHOCKLAB_THREADS").ok().as_deref()) {
        Ok(Some(n)) => {
            shocklab_core::exec::configure_threads(n);
        }
        Ok(None) => {}
        Err(e) => return fail(&Failure::config(&e), Some(mode)),
    }
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
    };
    let config = match RunConfig::load(cli.config.as_deref(), mode, &overrides) {
        Ok(c) => c,
        Err(e) => return fail(&Failure::config(&e), Some(mode)),
    };
    let outcome = run_scenario(&config);
    if !cli.quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
    }
    match &outcome.failure {
        Some(f) => fail(f, Some(mode)),
        None => ExitCode::SUCCESS,
    }
}
