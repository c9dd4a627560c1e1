use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fieldscan::pipeline::{run_command, Command, CommandArgs, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "fieldscan", version, about = "Simulate, reconstruct and evaluate kinematic laser scans of plant rows")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON pipeline configuration; the built-in default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0: all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory holding the inputs of this stage; defaults to --out.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Synthesize the scene, the true trajectory and every sensor stream.
    Simulate(Common),
    /// Smooth GNSS, heading/pitch and IMU streams into a pose track.
    Solve(Common),
    /// Turn laser profiles into a point cloud with the smoothed track.
    Georef(Common),
    /// Estimate scanner mounting from plane scans.
    Calibrate(Common),
    /// M3C2 precision and leaf-area completeness.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Reference cloud (PLY); use together with --cmp.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Compared cloud (PLY).
        #[arg(long = "cmp")]
        compared: Option<PathBuf>,
    },
    /// Bake a texture from calibrated camera images.
    Bake {
        #[command(flatten)]
        common: Common,
        /// Mesh with texture coordinates (PLY); use together with --cameras.
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Camera list (JSON).
        #[arg(long)]
        cameras: Option<PathBuf>,
    },
    /// Run the exposure controller.
    Autoexpose {
        #[command(flatten)]
        common: Common,
        /// CSV of 8-bin histograms to replay.
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// All stages in sequence.
    E2e(Common),
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut args = CommandArgs::default();
    let (cmd, common) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Solve(c) => (Command::Solve, c),
        Sub::Georef(c) => (Command::Georef, c),
        Sub::Calibrate(c) => (Command::Calibrate, c),
        Sub::Evaluate { common, reference, compared } => {
            (args.reference, args.compared) = (reference, compared);
            (Command::Evaluate, common)
        }
        Sub::Bake { common, mesh, cameras } => {
            (args.mesh, args.cameras) = (mesh, cameras);
            (Command::Bake, common)
        }
        Sub::Autoexpose { common, histograms } => {
            args.histograms = histograms;
            (Command::Autoexpose, common)
        }
        Sub::E2e(c) => (Command::E2e, c),
    };
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
    }
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    args.out = common.out;
    args.input = common.input;
    let manifest = run_command(cmd, &cfg, &args)?;
    log::info!(
        "{} done: {} artifacts in {}",
        manifest.command,
        manifest.artifacts.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
