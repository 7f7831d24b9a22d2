mod args;
mod commands;
mod config;
mod error;
mod heatmap;
mod manifest;

use clap::Parser;

use crate::args::Cli;
use crate::error::EXIT_USAGE;

/// Sizes the global worker pool from `LOCUS_THREADS`.
fn init_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("LOCUS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("LOCUS_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Err(msg) = init_pool() {
        eprintln!("error: {msg}");
        std::process::exit(EXIT_USAGE);
    }
    if let Err(e) = commands::dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
