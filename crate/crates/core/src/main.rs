use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heston_sm::io::{execute, load_config, Command, Selection};

#[derive(Parser)]
#[command(name = "heston-sm", version, about = "Heston calibration by space mapping")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo Asian and European put prices for each quote and guess.
    PriceMc(Common),
    /// Finite-difference European put prices for each quote and guess.
    PricePde(Common),
    /// Calibrate the PDE model to each market price.
    CalibrateCoarse(Common),
    /// Space-mapping calibration of the Monte Carlo model.
    CalibrateAsm(Common),
    /// Time-step halving study of the PDE pricer.
    ConvergenceReport(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only this quote id.
    #[arg(long)]
    quote: Option<String>,
    /// Only this guess id.
    #[arg(long)]
    guess: Option<String>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (cmd, args) = match cli.command {
        Cmd::PriceMc(a) => (Command::PriceMc, a),
        Cmd::PricePde(a) => (Command::PricePde, a),
        Cmd::CalibrateCoarse(a) => (Command::CalibrateCoarse, a),
        Cmd::CalibrateAsm(a) => (Command::CalibrateAsm, a),
        Cmd::ConvergenceReport(a) => (Command::ConvergenceReport, a),
    };
    let fail = |e: heston_sm::Error| {
        eprintln!("error: {e}");
        ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE })
    };
    let loaded = match load_config(&args.config, args.seed, args.out.as_deref()) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let sel = Selection {
        quote: args.quote,
        guess: args.guess,
    };
    match execute(cmd, &loaded, &sel) {
        Ok(outcome) => {
            for p in &outcome.written {
                log::info!("wrote {}", p.display());
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("failed: quote {}, guess {}: {}", f.quote_id, f.guess_id, f.error);
                }
                ExitCode::from(if outcome.any_numerical_failure() {
                    EXIT_NUMERICAL
                } else {
                    EXIT_USAGE
                })
            }
        }
        Err(e) => fail(e),
    }
}
