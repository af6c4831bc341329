mod commands;
mod opts;
mod scores;
mod table;

use std::process::ExitCode;

use clap::Parser;
use itm_core::ItmError;

use crate::opts::{Cli, Command};

fn exit_code(e: &ItmError) -> u8 {
    match e {
        ItmError::Numeric { .. } | ItmError::State(_) => 1,
        _ => 2,
    }
}

fn run(cli: &Cli) -> itm_core::Result<()> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(ItmError::Argument("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| ItmError::Config(format!("thread pool: {e}")))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Score(a) => commands::score(g, a),
        Command::Rank(a) => commands::rank(g, a),
        Command::Synth(a) => commands::synth(g, a),
        Command::Stability(a) => commands::stability(g, a),
        Command::Metrics(a) => commands::metrics(g, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ITM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
