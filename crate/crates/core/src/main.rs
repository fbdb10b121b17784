use std::process::ExitCode;
use std::sync::atomic::Ordering;

use stockset::cli::{parse_args, USER_AGENT_ENV};
use stockset::run::{run, RunEnv, EXIT_FATAL};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cfg = match parse_args(std::env::args_os(), std::env::var(USER_AGENT_ENV).ok()) {
        Ok(cfg) => cfg,
        Err(e) if e.is_informational() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_FATAL as u8);
        }
    };

    let env = RunEnv::from_config(&cfg);
    let cancel = env.cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        eprintln!("interrupted, finishing in-flight tickers");
        cancel.store(true, Ordering::SeqCst);
    }) {
        log::warn!("could not install interrupt handler: {e}");
    }

    match run(&cfg, &env, &mut std::io::stdout()) {
        Ok(report) => ExitCode::from(report.exit_code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FATAL as u8)
        }
    }
}
