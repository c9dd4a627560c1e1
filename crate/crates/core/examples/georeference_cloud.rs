//! Builds a point cloud from the first metre of a simulated drive, using the
//! smoothed trajectory, and writes it as binary PLY.
//!
//!     cargo run --release --example georeference_cloud -- cloud.ply

use fieldscan::io::ply::{write_point_cloud, PlyFormat};
use fieldscan::pipeline::{georeference, simulate, solve, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "cloud.ply".into());
    let mut cfg = PipelineConfig::default();
    cfg.trajectory.length = 1.0;
    cfg.scene.ground_extent[1] = 1.2;
    if let Some(r) = cfg.scene.random_leaves.as_mut() {
        r.count = 4;
        r.region[1] = 0.9;
    }
    let sim = simulate(&cfg)?;
    let sol = solve(&cfg, &sim.streams)?;
    let (cloud, report) = georeference(&sim.profiles, &sol.track, &sim.mounts)?;
    write_point_cloud(&path, &cloud, PlyFormat::BinaryLittleEndian)?;
    println!("{report:?}");
    println!("wrote {} points to {path}", cloud.len());
    Ok(())
}
