use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mfcnn_core::experiments::{self, ExperimentConfig, ExperimentKind, Overrides};
use mfcnn_core::Error;

/// Matched-filter CNN experiments.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Class-mean kernels on MNIST with no training.
    UntrainedMnist(RunArgs),
    /// One full-size convolution layer on MNIST, template and random init.
    #[command(name = "mnist-1layer")]
    MnistOneLayer(RunArgs),
    /// Two convolution layers on MNIST.
    #[command(name = "mnist-2layer")]
    MnistTwoLayer(RunArgs),
    /// One convolution layer on a directory of sign-language images.
    #[command(name = "sign-1layer")]
    SignOneLayer(RunArgs),
    /// Two convolution layers on a directory of sign-language images.
    #[command(name = "sign-2layer")]
    SignTwoLayer(RunArgs),
    /// 1D pulse detection, L-shape correlation vs convolution, three-shape scene.
    SyntheticDemo(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// key = value config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" => 3,
        "shape" => 4,
        "data" => 5,
        "io" => 6,
        "training" => 7,
        "checkpoint" => 8,
        _ => 1,
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(kind, path)?,
        None => ExperimentConfig::defaults(kind),
    };
    config.apply(&Overrides {
        seed: args.seed,
        epochs: args.epochs,
        learning_rate: args.lr,
        out_dir: args.out.clone(),
    })?;
    let started = Instant::now();
    let report = experiments::run(&config)?;
    print!("{}", report.text);
    eprintln!(
        "wrote {} in {:.1}s",
        config.out_dir.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::UntrainedMnist(a) => (ExperimentKind::UntrainedMnist, a),
        Command::MnistOneLayer(a) => (ExperimentKind::MnistOneLayer, a),
        Command::MnistTwoLayer(a) => (ExperimentKind::MnistTwoLayer, a),
        Command::SignOneLayer(a) => (ExperimentKind::SignOneLayer, a),
        Command::SignTwoLayer(a) => (ExperimentKind::SignTwoLayer, a),
        Command::SyntheticDemo(a) => (ExperimentKind::SyntheticDemo, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
