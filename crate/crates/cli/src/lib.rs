//! Command-line workflows around `ultra-core`: simulate scenes, unmix, score,
//! grid-search, test significance and render abundance maps.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or file format, 3 numerical failure.

pub mod args;
pub mod commands;
mod error;
pub mod io;

pub use error::CliError;

use args::{Cli, Command};

/// Runs one command, writing results to `out` and warnings to `err`.
pub fn run(cli: &Cli, out: &mut impl std::io::Write, err: &mut impl std::io::Write) -> Result<(), CliError> {
    let line = |w: &mut dyn std::io::Write, text: &str| {
        let _ = writeln!(w, "{text}");
    };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Unmix(a) => commands::unmix(a),
        Command::Eval(a) => commands::eval(a).map(|text| line(out, &text)),
        Command::Gridsearch(a) => commands::gridsearch(a).map(|text| line(out, &text)),
        Command::Wilcoxon(a) => commands::wilcoxon(a).map(|text| line(out, &text)),
        Command::Render(a) => commands::render(a).map(|clamped| {
            if clamped > 0 {
                line(err, &format!("warning: {clamped} values outside [0, 1] were clamped"));
            }
        }),
    }
}
