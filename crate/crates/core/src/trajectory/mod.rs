//! Batch factor-graph smoothing of IMU, GNSS position and GNSS
//! heading/pitch observations into a globally referenced pose track.

mod factors;
mod graph;
mod preintegration;
mod solver;

pub use factors::{
    numeric_jacobian, propagate, BiasWalkFactor, Factor, GnssFactor, HeadingPitchFactor, ImuFactor, Linearization,
    PriorFactor, StateNode, Whitener, TANGENT_DIM,
};
pub use graph::{assemble_graph, dead_reckon, gnss_anchored, FactorGraph};
pub use preintegration::{nominal_period, preintegrate_imu, ImuNoise, Matrix9, PreintegratedDelta};
pub use solver::{optimize_trajectory, OptimReport, SmootherSolution};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("empty {0} stream")]
    EmptyStream(&'static str),
    #[error("streams do not overlap: {0}")]
    NoOverlap(String),
    #[error("imu gap of {gap} s at t = {at}")]
    GapTooLarge { at: f64, gap: f64 },
    #[error("optimizer diverged: {0}")]
    Diverged(String),
    #[error("singular normal equations: {0}")]
    SingularSystem(String),
    #[error("invalid smoother configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Integrate the IMU forward from the first fix and heading.
    DeadReckoning,
    /// Positions from fixes, attitude from heading/pitch, velocity from
    /// differenced fixes.
    GnssAnchored,
}

/// Standard deviations of the prior on the first node. An infinite value
/// leaves that component unconstrained; JSON writes it as `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSigmas {
    #[serde(with = "unbounded")]
    pub rotation: f64,
    #[serde(with = "unbounded")]
    pub position: f64,
    #[serde(with = "unbounded")]
    pub velocity: f64,
    #[serde(with = "unbounded")]
    pub gyro_bias: f64,
    #[serde(with = "unbounded")]
    pub accel_bias: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for PriorSigmas {
    fn default() -> Self {
        Self {
            rotation: 0.1,
            position: 0.1,
            velocity: f64::INFINITY,
            gyro_bias: 0.01,
            accel_bias: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub imu_noise: ImuNoise,
    /// Bias random-walk densities, per √s.
    pub gyro_bias_walk: f64,
    pub accel_bias_walk: f64,
    /// Antenna position in the body frame, m.
    pub antenna_lever: Vector3<f64>,
    /// Huber threshold on whitened GNSS residuals; `None` for plain least squares.
    pub huber_delta: Option<f64>,
    /// Largest time offset between a heading observation and its keyframe, s.
    pub heading_tolerance: f64,
    pub use_heading: bool,
    pub prior: PriorSigmas,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub init: InitMethod,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            imu_noise: ImuNoise::default(),
            gyro_bias_walk: 1e-4,
            accel_bias_walk: 1e-3,
            antenna_lever: Vector3::new(-0.6, 0.0, 1.0),
            huber_delta: Some(3.0),
            heading_tolerance: 0.05,
            use_heading: true,
            prior: PriorSigmas::default(),
            lambda_init: 1e-4,
            lambda_factor: 10.0,
            max_iterations: 100,
            relative_tolerance: 1e-9,
            init: InitMethod::DeadReckoning,
        }
    }
}

/// Builds the graph and optimizes it. If a dead-reckoning start fails to
/// converge, the problem is re-solved from the GNSS-anchored estimate and the
/// better of the two results is returned.
pub fn smooth_trajectory(
    imu: &[crate::sim::ImuSample],
    gnss: &[crate::sim::GnssFix],
    heading_pitch: &[crate::sim::HeadingPitchObs],
    config: &SmootherConfig,
) -> Result<SmootherSolution, TrajectoryError> {
    let graph = assemble_graph(imu, gnss, heading_pitch, config)?;
    let first = optimize_trajectory(&graph, None, config);
    if matches!(&first, Ok(sol) if sol.report.converged) || config.init == InitMethod::GnssAnchored {
        return first;
    }
    log::info!("dead-reckoning start did not converge, retrying from gnss-anchored estimate");
    let anchored = SmootherConfig { init: InitMethod::GnssAnchored, ..config.clone() };
    let retry = assemble_graph(imu, gnss, heading_pitch, &anchored).and_then(|g| optimize_trajectory(&g, None, config));
    match (first, retry) {
        (Ok(a), Ok(b)) if !b.report.converged && a.report.final_cost <= b.report.final_cost => Ok(a),
        (_, Ok(b)) => Ok(b),
        (Ok(a), Err(_)) => Ok(a),
        (Err(e), Err(_)) => Err(e),
    }
}
