mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use commands::UsageError;

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DMF_LOG", "off"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

/// Prints the error, with the usage line when clap left it out, and exits with status 2.
fn usage_error(e: clap::Error) -> ! {
    let text = e.render().to_string();
    eprint!("{text}");
    if !text.contains("Usage:") {
        eprintln!("\n{}", Cli::command().render_usage());
    }
    std::process::exit(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => usage_error(e),
        Err(e) => e.exit(),
    };
    init_logging();

    let flags = match &cli.command {
        Command::Run(a) => a.sim.validate(),
        Command::Compare(a) => match a.sim.landmarks {
            Some(_) if a.sim.mode == args::ModeArg::Active => Ok(()),
            _ => a.sim.validate(),
        },
        Command::Analyze(_) | Command::SvdProfile(_) => Ok(()),
    };
    if let Err(msg) = flags {
        usage_error(Cli::command().error(ErrorKind::ArgumentConflict, msg));
    }

    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::SvdProfile(a) => commands::svd_profile(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => usage_error(Cli::command().error(ErrorKind::InvalidValue, &u.0)),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
