//! `stylerec`: extract features, train style classifiers, evaluate them and
//! search image collections by style.

mod args;
mod commands;
mod config;
mod failure;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::Failure;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Failure::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(move || {
        config::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
            Command::Extract(a) => commands::extract::run(a.resolve(&cfg)?),
            Command::Train(a) => commands::train::run(a.resolve(&cfg)?),
            Command::Evaluate(a) => commands::evaluate::run(a.resolve(&cfg)?),
            Command::Search(a) => commands::search::run(a.resolve(&cfg)?),
            Command::CrossRank(a) => commands::search::cross_rank(a.resolve(&cfg)?),
        })
    })
    .unwrap_or_else(|_| Err(Failure::Internal("unexpected panic".into())));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
