//! `signpipe`: every stage of the sign-recognition and gesture pipeline
//! behind one binary. Tables go to stdout, logs to stderr.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors (including missing input files).

mod commands;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{GlobalArgs, Settings};

#[derive(Debug, Parser)]
#[command(name = "signpipe", version, about = "Sign recognition to co-speech gesture pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    /// Log more (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a landmark corpus into fixed-length feature tensors
    Preprocess(commands::PreprocessArgs),
    /// Write a synthetic landmark corpus with class-specific motions
    Synth(commands::SynthArgs),
    /// Train a classifier and print per-epoch metrics as CSV
    Train(commands::TrainArgs),
    /// Predict a gloss for every sample in a corpus
    Infer(commands::InferArgs),
    /// Report top-1/top-5 accuracy on a labeled corpus
    Eval(commands::EvalArgs),
    /// Run the recognition server
    Serve(commands::ServeArgs),
    /// Send samples to a server and log the returned scripts
    RobotSim(commands::RobotSimArgs),
    /// Compose a gesture-tagged reply for a recognized sign
    Compose(commands::ComposeArgs),
    /// Playtime statistics of the descriptor database
    Stats,
    /// Time the classifier forward pass
    Bench(commands::BenchArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or missing inputs (exit 2).
    Usage(anyhow::Error),
    /// Failure while running (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(anyhow::anyhow!(msg.into()))
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&settings, a),
        Command::Synth(a) => commands::synth(&settings, a),
        Command::Train(a) => commands::train(&settings, a),
        Command::Infer(a) => commands::infer(&settings, a),
        Command::Eval(a) => commands::eval(&settings, a),
        Command::Serve(a) => commands::serve(&settings, a),
        Command::RobotSim(a) => commands::robot_sim(&settings, a),
        Command::Compose(a) => commands::compose(&settings, a),
        Command::Stats => commands::stats(&settings),
        Command::Bench(a) => commands::bench(&settings, a),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        // a closed stdout (e.g. piped into `head`) is not a failure
        Err(CliError::Runtime(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
