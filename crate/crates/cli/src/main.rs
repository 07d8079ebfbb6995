//! `qsum`: command-line front end for the multi-party quantum summation
//! simulator: honest runs, private mode, attack campaigns, and oracle
//! cross-checks, all reproducible from a seed.

mod commands;
mod records;
mod scenario;

use clap::{Parser, Subcommand};

use commands::{AttackArgs, OracleCheckArgs, PrivateModeArgs, RunArgs};

#[derive(Parser, Debug)]
#[command(
    name = "qsum",
    version,
    about = "Multi-party modulo-d quantum summation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the summation protocol once and report the published sum.
    Run(RunArgs),
    /// Run once per preparer without publishing any sum.
    PrivateMode(PrivateModeArgs),
    /// Run a seeded campaign of attacked executions.
    Attack(AttackArgs),
    /// Cross-check the combinatorial oracle against the state-vector route.
    OracleCheck(OracleCheckArgs),
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => commands::cmd_run(args),
        Command::PrivateMode(args) => commands::cmd_private_mode(args),
        Command::Attack(args) => commands::cmd_attack(args),
        Command::OracleCheck(args) => commands::cmd_oracle_check(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
