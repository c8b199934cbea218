//! Experiment front end: dataset generation, training runs, grid search,
//! ablation sweeps and report tables, all recorded in a JSON Lines ledger.

pub mod commands;
pub mod error;
pub mod grid;
pub mod ledger;
pub mod report;
pub mod runner;

pub use commands::{execute, run, Cli};
pub use error::{CliError, CliResult};
pub use ledger::{Ledger, RunRecord};
