//! Configuration files, CSV tables and the subcommands of the binary.

pub mod commands;
pub mod config;
pub mod tables;

pub use commands::{execute, Command, PairFailure, RunOutcome, Selection};
pub use config::{default_guesses, load_config, GuessSpec, LoadedConfig, QuoteSpec, RunConfig};
pub use tables::{fmt_f64, load_guesses_csv, load_market_csv, Table};
