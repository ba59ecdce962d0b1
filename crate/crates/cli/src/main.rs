use std::process::ExitCode;

use clap::Parser;

use morphalign_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(value) = std::env::var("MORPHALIGN_THREADS") {
        match value.trim().parse::<usize>() {
            Ok(n) => {
                morphalign::parallel::init_threads(n);
            }
            Err(_) => log::warn!("ignoring MORPHALIGN_THREADS={value:?}: not a number"),
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
