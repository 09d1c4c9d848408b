use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod common;
mod data;
mod landmark;
mod latency;
mod matching;
mod segment;
mod serve;
mod synth_gen;
mod train;

use common::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "bodygps", version, about = "Anatomical positioning on CT-like volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a phantom atlas and deformed subjects with exact ground truth.
    SynthGen(synth_gen::Args),
    /// Train a regressor on a synthetic dataset.
    Train(train::Args),
    /// Label every voxel of a volume through the atlas.
    Segment(segment::Args),
    /// Find the point in a target volume that corresponds to a source point.
    Match(matching::Args),
    /// Locate a landmark with a displacement model.
    Landmark(landmark::Args),
    /// Time descriptor extraction plus forward pass on random in-body points.
    BenchLatency(latency::Args),
    /// Run the HTTP service.
    Serve(serve::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::SynthGen(a) => synth_gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Segment(a) => segment::run(a),
        Command::Match(a) => matching::run(a),
        Command::Landmark(a) => landmark::run(a),
        Command::BenchLatency(a) => latency::run(a),
        Command::Serve(a) => serve::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

