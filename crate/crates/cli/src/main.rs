//! `vrkit` command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or validation error.

mod cmd;
mod staging;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "vrkit",
    version,
    about = "Viewpoint-robustness toolkit for PCB defect detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an expanded training set or a viewpoint-shifted test set.
    Augment(cmd::augment::AugmentArgs),
    /// Score predictions against a ground-truth manifest.
    Eval(cmd::eval::EvalArgs),
    /// Finite-difference check of the SIoU and CIoU gradients.
    Losscheck(cmd::checks::LosscheckArgs),
    /// Shape, bound, zero-weight and oracle checks of the CBAM block.
    Cbamcheck(cmd::checks::CbamcheckArgs),
    /// Stratified train/val split of a manifest.
    Split(cmd::dataset::SplitArgs),
    /// Convert Pascal VOC annotations to YOLO labels.
    Convert(cmd::dataset::ConvertArgs),
    /// Write a synthetic labeled board dataset.
    Synth(cmd::dataset::SynthArgs),
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Pass,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Augment(a) => cmd::augment::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Losscheck(a) => cmd::checks::losscheck(a),
        Command::Cbamcheck(a) => cmd::checks::cbamcheck(a),
        Command::Split(a) => cmd::dataset::split(a),
        Command::Convert(a) => cmd::dataset::convert(a),
        Command::Synth(a) => cmd::dataset::synth(a),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
