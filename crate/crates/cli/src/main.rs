use anyhow::{Context, Result};
use clap::Parser;
use countcopula_cli::{run, Command, THREADS_ENV};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "countcopula", version, about = "Multi-species count models with Gaussian-copula dependence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV}={raw:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
