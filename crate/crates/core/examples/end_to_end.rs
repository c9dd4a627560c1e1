//! Runs every stage on the default configuration and prints the run
//! manifest's metrics.
//!
//!     cargo run --release --example end_to_end -- out_dir

use fieldscan::pipeline::{run_command, Command, CommandArgs, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "e2e_out".into());
    let args = CommandArgs {
        out: out.into(),
        ..Default::default()
    };
    let manifest = run_command(Command::E2e, &PipelineConfig::default(), &args)?;
    for (name, value) in &manifest.metrics {
        println!("{name}: {value}");
    }
    println!("{} artifacts, config {}", manifest.artifacts.len(), &manifest.config_sha256[..12]);
    Ok(())
}
