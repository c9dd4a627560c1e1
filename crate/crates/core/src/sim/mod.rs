//! Synthetic scenes, trajectories and sensor streams (laser profiles, IMU,
//! GNSS position and heading/pitch) with deterministic, seed-driven noise.

mod inertial;
mod laser;
mod motion;
mod scene;

pub use inertial::{simulate_inertial_and_gnss, InertialConfig, InertialStreams};
pub use laser::{profile_rng, simulate_laser_profiles, simulate_laser_profiles_on_mesh, ScannerModel};
pub use motion::{generate_trajectory, TrajectoryModel, TrajectorySpec};
pub use scene::{synthesize_scene, LeafSpec, RandomLeaves, Scene, SceneSpec, Tessellation};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gravity magnitude, m/s². The global frame is z-up, so gravity is
/// `(0, 0, -GRAVITY)`.
pub const GRAVITY: f64 = 9.81;

pub fn gravity_vector() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("pose track is empty or too short to cover the scan window")]
    EmptyTrack,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One point of a laser line in the scanner XZ plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x: f64,
    pub z: f64,
    pub valid: bool,
}

impl ProfileSample {
    pub const INVALID: ProfileSample = ProfileSample {
        x: 0.0,
        z: 0.0,
        valid: false,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserProfile {
    pub timestamp: f64,
    pub samples: Vec<ProfileSample>,
}

impl LaserProfile {
    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub timestamp: f64,
    /// Body-frame angular rate, rad/s.
    pub angular_rate: Vector3<f64>,
    /// Body-frame specific force, m/s² (reads +g upward when at rest).
    pub acceleration: Vector3<f64>,
}

/// Antenna position fix in the global frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub timestamp: f64,
    pub position: Vector3<f64>,
    /// Per-axis standard deviation, m.
    pub sigma: Vector3<f64>,
}

/// Dual-antenna baseline attitude. Heading is clockwise from north; pitch is
/// nose-up positive. Both radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadingPitchObs {
    pub timestamp: f64,
    pub heading: f64,
    pub pitch: f64,
    pub heading_sigma: f64,
    pub pitch_sigma: f64,
}
