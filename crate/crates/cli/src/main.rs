//! `dataplace`: command line front end for the placement library.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::{CliError, Context};

#[derive(Parser, Debug)]
#[command(
    name = "dataplace",
    version,
    about = "Cache placement by best response, Glauber dynamics and dual auctions"
)]
struct Cli {
    /// Suppress human-readable tables.
    #[arg(long, global = true)]
    quiet: bool,

    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,

    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "DATAPLACE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Input {
    /// Instance file (JSON).
    #[arg(short, long)]
    pub input: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random instance.
    Generate(commands::GenerateArgs),
    /// Check an instance file.
    Validate(Input),
    /// Replace every agent by unit-cache copies.
    Reduce(commands::ReduceArgs),
    /// Potential, per-agent costs and holders of an allocation.
    Eval(commands::AllocArgs),
    /// Exhaustive optimum.
    Brute(Input),
    /// Exact distance-to-stationarity curve of the Glauber chain.
    Chain(commands::ChainArgs),
    /// Simulate Glauber dynamics.
    Glauber(commands::GlauberArgs),
    /// Round-robin best response to an equilibrium.
    Bestresponse(commands::BestResponseArgs),
    /// Coupling estimate of the mixing time.
    Mix(commands::MixArgs),
    /// Maximize the dual by projected supergradient ascent.
    Dual(commands::DualArgs),
    /// Quality bound of an equilibrium.
    Nebound(commands::AllocArgs),
    /// First-price auction at the solved dual prices.
    Auction(commands::AuctionArgs),
    /// Run the acceptance suite.
    Experiment(commands::ExperimentArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Reported(code)) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 2 {
                eprintln!("\nFor more information, try '--help'.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Context::new(cli.format, cli.quiet);
    match cli.command {
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Validate(a) => commands::validate(&ctx, a),
        Command::Reduce(a) => commands::reduce(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Brute(a) => commands::brute(&ctx, a),
        Command::Chain(a) => commands::chain(&ctx, a),
        Command::Glauber(a) => commands::glauber(&ctx, a),
        Command::Bestresponse(a) => commands::best_response(&ctx, a),
        Command::Mix(a) => commands::mix(&ctx, a),
        Command::Dual(a) => commands::dual(&ctx, a),
        Command::Nebound(a) => commands::nebound(&ctx, a),
        Command::Auction(a) => commands::auction(&ctx, a),
        Command::Experiment(a) => commands::experiment(&ctx, a),
    }
}
