mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Register(a) => commands::cmd_register(a),
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Features(a) => commands::cmd_features(a),
        Command::Compare(a) => commands::cmd_compare(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    // Parse failures exit with 2; help and version exit with 0.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
