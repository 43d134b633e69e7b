mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Compressed-video quality enhancement toolkit.
#[derive(Parser, Debug)]
#[command(name = "vqe", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Luma width of raw YUV input
    #[arg(long, global = true)]
    pub width: Option<usize>,
    /// Luma height of raw YUV input
    #[arg(long, global = true)]
    pub height: Option<usize>,
    /// Quantization parameter (0..=51)
    #[arg(long, global = true)]
    pub qp: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training config file (`key = value` lines)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spatial noise std-dev map of a compressed frame, and optionally its
    /// temporal difference to a later frame
    AnalyzeNoise(commands::AnalyzeNoise),
    /// Depth, boundary and mean-filled maps from a TU sidecar
    GenGuidedMap(commands::GenGuidedMap),
    /// Per-segment optimal deblocking modes, agreement with the standard
    /// rule, and optional BD-rate of RD curves
    DeblockOracle(commands::DeblockOracle),
    /// Block-DCT quantization of every luma frame, with a TU sidecar
    SimulateCompress(commands::SimulateCompress),
    Train(commands::Train),
    Enhance(commands::Enhance),
    /// Per-frame PSNR of compressed and enhanced video against raw
    Evaluate(commands::Evaluate),
    /// Mean ΔPSNR of one checkpoint across simulated QPs
    Robustness(commands::Robustness),
    /// Finite-difference check of the network's analytic gradients
    Gradcheck(commands::Gradcheck),
}

/// `error[category]` label of a failure.
fn category(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<vqe_core::Error>() {
            return core.category();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<commands::UsageError>() {
            return "usage";
        }
    }
    "internal"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let c = &cli.common;
    let result = match cli.command {
        Command::AnalyzeNoise(a) => commands::analyze_noise(c, a),
        Command::GenGuidedMap(a) => commands::gen_guided_map(c, a),
        Command::DeblockOracle(a) => commands::deblock_oracle(c, a),
        Command::SimulateCompress(a) => commands::simulate_compress(c, a),
        Command::Train(a) => commands::train(c, a),
        Command::Enhance(a) => commands::enhance(c, a),
        Command::Evaluate(a) => commands::evaluate(c, a),
        Command::Robustness(a) => commands::robustness(c, a),
        Command::Gradcheck(a) => commands::gradcheck(c, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{}]: {msg}", category(&e));
            ExitCode::FAILURE
        }
    }
}
