use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GnssFix, HeadingPitchObs, ImuSample, SimError, TrajectoryModel};
use crate::geometry::so3;

/// Smallest standard deviation written into a measurement record, so that
/// noiseless simulations still produce usable weights.
const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertialConfig {
    pub imu_rate: f64,
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gnss_rate: f64,
    /// Per-axis (east, north, up) standard deviation, m.
    pub gnss_sigma: Vector3<f64>,
    /// Antenna position in the body frame, m.
    pub antenna_lever: Vector3<f64>,
    pub heading_rate: f64,
    pub heading_sigma: f64,
    pub pitch_sigma: f64,
}

impl Default for InertialConfig {
    fn default() -> Self {
        Self {
            imu_rate: 100.0,
            gyro_noise_density: 0.01,
            accel_noise_density: 0.05,
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            gnss_rate: 10.0,
            gnss_sigma: Vector3::new(0.01, 0.01, 0.02),
            antenna_lever: Vector3::new(-0.6, 0.0, 1.0),
            heading_rate: 10.0,
            heading_sigma: 0.0035,
            pitch_sigma: 0.007,
        }
    }
}

impl InertialConfig {
    /// Same geometry and rates with every noise term and bias set to zero.
    pub fn noiseless(&self) -> Self {
        Self {
            gyro_noise_density: 0.0,
            accel_noise_density: 0.0,
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            gnss_sigma: Vector3::zeros(),
            heading_sigma: 0.0,
            pitch_sigma: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InertialStreams {
    pub imu: Vec<ImuSample>,
    pub gnss: Vec<GnssFix>,
    pub heading_pitch: Vec<HeadingPitchObs>,
}

fn sample_times(t0: f64, t1: f64, rate: f64) -> impl Iterator<Item = f64> {
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize;
    (0..=n).map(move |k| t0 + k as f64 / rate)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gauss3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(gauss(rng), gauss(rng), gauss(rng))
}

/// Samples IMU, antenna position and baseline attitude along the model.
/// White noise uses discrete standard deviation `density * sqrt(rate)`.
pub fn simulate_inertial_and_gnss(
    model: &TrajectoryModel,
    config: &InertialConfig,
    seed: u64,
) -> Result<InertialStreams, SimError> {
    for (name, rate) in [("imu_rate", config.imu_rate), ("gnss_rate", config.gnss_rate), ("heading_rate", config.heading_rate)] {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(SimError::InvalidParameter(format!("{name} must be positive")));
        }
    }
    let (t0, t1) = (model.start_time(), model.end_time());
    let stream = |id: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        rng
    };

    let mut rng = stream(1);
    let gyro_sd = config.gyro_noise_density * config.imu_rate.sqrt();
    let accel_sd = config.accel_noise_density * config.imu_rate.sqrt();
    let imu = sample_times(t0, t1, config.imu_rate)
        .map(|t| ImuSample {
            timestamp: t,
            angular_rate: model.angular_rate(t) + config.gyro_bias + gyro_sd * gauss3(&mut rng),
            acceleration: model.specific_force(t) + config.accel_bias + accel_sd * gauss3(&mut rng),
        })
        .collect();

    let mut rng = stream(2);
    let reported = config.gnss_sigma.map(|s| s.max(SIGMA_FLOOR));
    let gnss = sample_times(t0, t1, config.gnss_rate)
        .map(|t| {
            let pose = model.pose(t);
            let noise = gauss3(&mut rng).component_mul(&config.gnss_sigma);
            GnssFix {
                timestamp: t,
                position: pose.transform_point(&config.antenna_lever) + noise,
                sigma: reported,
            }
        })
        .collect();

    let mut rng = stream(3);
    let heading_pitch = sample_times(t0, t1, config.heading_rate)
        .map(|t| {
            let forward = model.rotation(t) * Vector3::x();
            HeadingPitchObs {
                timestamp: t,
                heading: so3::wrap_angle(so3::heading_of(&forward) + config.heading_sigma * gauss(&mut rng)),
                pitch: so3::pitch_of(&forward) + config.pitch_sigma * gauss(&mut rng),
                heading_sigma: config.heading_sigma.max(SIGMA_FLOOR),
                pitch_sigma: config.pitch_sigma.max(SIGMA_FLOOR),
            }
        })
        .collect();

    Ok(InertialStreams { imu, gnss, heading_pitch })
}
