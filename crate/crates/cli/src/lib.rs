//! Command-line pipeline around `countcopula`: configuration, subcommands,
//! versioned result documents and plot data.

pub mod commands;
pub mod config;
pub mod document;
pub mod output;

pub use commands::{run, Command, Options};
pub use config::{LambdaChoice, Likelihood, RunConfig};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "COUNTCOPULA_THREADS";
