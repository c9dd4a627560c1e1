//! Simulates IMU, GNSS and heading/pitch streams for a 60 s drive, smooths
//! them and compares the result with the raw GNSS fixes.

use fieldscan::sim::{generate_trajectory, simulate_inertial_and_gnss, InertialConfig, TrajectorySpec};
use fieldscan::trajectory::{smooth_trajectory, SmootherConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TrajectorySpec {
        length: 6.0,
        wobble_amplitude: 0.05,
        wobble_frequency: 0.1,
        ..TrajectorySpec::default()
    };
    let model = generate_trajectory(&spec)?;
    let sensors = InertialConfig::default();
    let streams = simulate_inertial_and_gnss(&model, &sensors, 42)?;
    let sol = smooth_trajectory(&streams.imu, &streams.gnss, &streams.heading_pitch, &SmootherConfig::default())?;

    let rmse = |errs: Vec<f64>| (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    let smoothed = rmse(sol.nodes.iter().map(|n| (n.pose.position - model.position(n.timestamp)).norm()).collect());
    // fixes locate the antenna, so compare them with the true antenna path
    let raw = rmse(
        streams
            .gnss
            .iter()
            .map(|f| (f.position - model.pose(f.timestamp).transform_point(&sensors.antenna_lever)).norm())
            .collect(),
    );
    println!("{} imu samples, {} fixes, {} nodes", streams.imu.len(), streams.gnss.len(), sol.nodes.len());
    println!("{:?}", sol.report);
    println!("position rmse: raw fixes {:.2} cm, smoothed {:.2} cm", raw * 100.0, smoothed * 100.0);
    Ok(())
}
