//! `percascade` — command-line front end for the cascade library.
//!
//! Three verbs:
//!
//! * `percascade verify <suite>` runs a verification suite and emits
//!   structured pass/fail reports (exit 0 all pass, 1 any fail).
//! * `percascade sample <cascade|children|walk>` draws reproducible
//!   samples from the simulators.
//! * `percascade table <function>` tabulates closed forms on a grid.
//!
//! Flags can also come from a `key = value` config file (`--config`);
//! explicit flags win over file entries. Invalid configuration exits 2.

mod commands;
mod opts;
mod output;

use clap::{Parser, Subcommand};

use opts::RawOpts;

#[derive(Parser)]
#[command(
    name = "percascade",
    about = "Perimeter cascades: verification suites, samplers, and tables",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and report pass/fail per identity.
    Verify {
        /// Suite name (kemperman, rw-identity, levy, biggins, fixed-point,
        /// cumulant-root, malthusian, tail-index, nesting, special-functions).
        suite: String,
        #[command(flatten)]
        opts: RawOpts,
    },
    /// Sample cascade trees, child vectors, or stopped walks.
    Sample {
        /// What to sample (cascade, children, walk).
        what: String,
        #[command(flatten)]
        opts: RawOpts,
    },
    /// Tabulate a closed-form function on a grid.
    Table {
        /// Function name (biggins, rate, psi, kappa, J, psi-kappa).
        function: String,
        #[command(flatten)]
        opts: RawOpts,
    },
}

fn run(cli: Cli) -> Result<i32, opts::CliError> {
    match cli.command {
        Command::Verify { suite, opts } => {
            let opts = opts.merged_with_config()?;
            commands::run_verify(&suite, &opts)
        }
        Command::Sample { what, opts } => {
            let opts = opts.merged_with_config()?;
            commands::run_sample(&what, &opts)
        }
        Command::Table { function, opts } => {
            let opts = opts.merged_with_config()?;
            commands::run_table(&function, &opts)
        }
    }
}

fn main() {
    match run(Cli::parse()) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
