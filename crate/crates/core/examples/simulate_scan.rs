//! Scans the default leaf scene with one side-mounted line scanner along the
//! true trajectory and summarizes the profiles.

use fieldscan::georef::MountingCalibration;
use fieldscan::raycast::MeshBvh;
use fieldscan::sim::{generate_trajectory, simulate_laser_profiles, synthesize_scene, ScannerModel, SceneSpec, TrajectorySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = synthesize_scene(&SceneSpec::default())?;
    let trajectory = generate_trajectory(&TrajectorySpec::default())?;
    let bvh = MeshBvh::build(&scene.mesh);
    let mount = MountingCalibration::side_mount(0.7, 0.2, 50f64.to_radians(), 0);
    let scanner = ScannerModel::default();
    let profiles = simulate_laser_profiles(&bvh, trajectory.track(), &mount, &scanner, 1)?;

    let valid: usize = profiles.iter().map(|p| p.valid_count()).sum();
    let depths: Vec<f64> = profiles.iter().flat_map(|p| p.samples.iter().filter(|s| s.valid).map(|s| s.z)).collect();
    let (lo, hi) = depths.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(*z), b.max(*z)));
    println!("scene: {} triangles, {} leaves", scene.mesh.triangles.len(), scene.leaves.len());
    println!("profiles: {} at {} Hz, {} valid samples of {}", profiles.len(), scanner.scan_rate, valid, profiles.len() * scanner.points_per_profile);
    println!("depth range: {lo:.3} .. {hi:.3} m");
    Ok(())
}
