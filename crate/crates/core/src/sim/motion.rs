use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, GRAVITY};
use crate::geometry::{so3, Pose, PoseTrack};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Along-track distance, m.
    pub length: f64,
    /// m/s.
    pub speed: f64,
    /// Peak lateral deviation, m.
    #[serde(default)]
    pub wobble_amplitude: f64,
    /// Lateral oscillation frequency in time, Hz.
    #[serde(default)]
    pub wobble_frequency: f64,
    /// Body origin at t0.
    pub start: Vector3<f64>,
    /// Counter-clockwise yaw of the driving direction, rad.
    #[serde(default)]
    pub yaw: f64,
    pub t0: f64,
    /// Ground-truth sampling rate, Hz.
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            length: 3.0,
            speed: 0.10,
            wobble_amplitude: 0.02,
            wobble_frequency: 0.05,
            start: Vector3::new(0.0, 0.0, 1.0),
            yaw: 0.0,
            t0: 0.0,
            rate: 100.0,
            seed: 0,
        }
    }
}

/// Closed-form planar motion: forward at constant speed with a sinusoidal
/// lateral offset, heading tangent to the path, zero pitch and roll.
/// Derivatives are analytic so inertial measurements can be synthesized
/// without numerical differentiation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryModel {
    pub spec: TrajectorySpec,
    phase: f64,
    track: PoseTrack,
}

pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<TrajectoryModel, SimError> {
    if !(spec.speed > 0.0 && spec.speed.is_finite()) {
        return Err(SimError::InvalidParameter("speed must be positive".into()));
    }
    if !(spec.length > 0.0 && spec.rate > 0.0) {
        return Err(SimError::InvalidParameter("length and rate must be positive".into()));
    }
    if spec.wobble_amplitude < 0.0 || spec.wobble_frequency < 0.0 {
        return Err(SimError::InvalidParameter("wobble must be non-negative".into()));
    }
    let phase = if spec.wobble_amplitude > 0.0 {
        ChaCha8Rng::seed_from_u64(spec.seed).random_range(0.0..TAU)
    } else {
        0.0
    };
    let mut model = TrajectoryModel {
        spec: spec.clone(),
        phase,
        track: PoseTrack::new(vec![0.0, 1.0], vec![Pose::identity(); 2], "enu").expect("placeholder track"),
    };
    let n = (spec.length / spec.speed * spec.rate).round() as usize;
    let times: Vec<f64> = (0..=n.max(1)).map(|k| spec.t0 + k as f64 / spec.rate).collect();
    let poses = times.iter().map(|&t| model.pose(t)).collect();
    model.track = PoseTrack::new(times, poses, "enu").map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    Ok(model)
}

impl TrajectoryModel {
    pub fn track(&self) -> &PoseTrack {
        &self.track
    }

    pub fn start_time(&self) -> f64 {
        self.spec.t0
    }

    pub fn end_time(&self) -> f64 {
        *self.track.times().last().expect("track has at least two entries")
    }

    fn omega(&self) -> f64 {
        TAU * self.spec.wobble_frequency
    }

    /// Lateral offset and its first three time derivatives.
    fn lateral(&self, t: f64) -> [f64; 4] {
        let (a, w) = (self.spec.wobble_amplitude, self.omega());
        let arg = w * (t - self.spec.t0) + self.phase;
        let (s, c) = arg.sin_cos();
        [a * (s - self.phase.sin()), a * w * c, -a * w * w * s, -a * w * w * w * c]
    }

    fn frame(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.spec.yaw)
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        let [y, ..] = self.lateral(t);
        self.spec.start + self.frame() * Vector3::new(self.spec.speed * (t - self.spec.t0), y, 0.0)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        let [_, yd, ..] = self.lateral(t);
        self.frame() * Vector3::new(self.spec.speed, yd, 0.0)
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        let [_, _, ydd, _] = self.lateral(t);
        self.frame() * Vector3::new(0.0, ydd, 0.0)
    }

    pub fn yaw(&self, t: f64) -> f64 {
        let [_, yd, ..] = self.lateral(t);
        self.spec.yaw + yd.atan2(self.spec.speed)
    }

    pub fn yaw_rate(&self, t: f64) -> f64 {
        let [_, yd, ydd, _] = self.lateral(t);
        let v = self.spec.speed;
        v * ydd / (v * v + yd * yd)
    }

    pub fn rotation(&self, t: f64) -> UnitQuaternion<f64> {
        so3::from_yaw_pitch_roll(self.yaw(t), 0.0, 0.0)
    }

    pub fn pose(&self, t: f64) -> Pose {
        Pose::new(self.position(t), self.rotation(t))
    }

    /// Body-frame angular rate.
    pub fn angular_rate(&self, t: f64) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.yaw_rate(t))
    }

    /// Body-frame specific force: `R^T (a - g)` with `g = (0, 0, -GRAVITY)`.
    pub fn specific_force(&self, t: f64) -> Vector3<f64> {
        self.rotation(t).inverse() * (self.acceleration(t) + Vector3::new(0.0, 0.0, GRAVITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn straight_line_spacing() {
        let spec = TrajectorySpec {
            wobble_amplitude: 0.0,
            ..TrajectorySpec::default()
        };
        let model = generate_trajectory(&spec).unwrap();
        let poses = model.track().poses();
        for w in poses.windows(2) {
            let d = w[1].position - w[0].position;
            assert!((d.norm() - spec.speed / spec.rate).abs() < 1e-12);
            assert!(d.y.abs() < 1e-15 && d.z.abs() < 1e-15);
        }
        assert_eq!(model.angular_rate(3.0), Vector3::zeros());
    }

    #[test]
    fn three_meters_take_thirty_seconds() {
        let model = generate_trajectory(&TrajectorySpec::default()).unwrap();
        assert!((model.end_time() - model.start_time() - 30.0).abs() < 1e-12);
        assert_eq!(model.track().len(), 3001);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = TrajectorySpec { seed: 5, ..TrajectorySpec::default() };
        assert_eq!(generate_trajectory(&spec).unwrap(), generate_trajectory(&spec).unwrap());
        let other = TrajectorySpec { seed: 6, ..spec.clone() };
        assert_ne!(generate_trajectory(&spec).unwrap().track(), generate_trajectory(&other).unwrap().track());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let spec = TrajectorySpec {
            wobble_amplitude: 0.05,
            wobble_frequency: 0.2,
            yaw: 0.7,
            seed: 3,
            ..TrajectorySpec::default()
        };
        let m = generate_trajectory(&spec).unwrap();
        let h = 1e-5;
        for &t in &[1.0, 7.3, 22.0] {
            let v_fd = (m.position(t + h) - m.position(t - h)) / (2.0 * h);
            assert_relative_eq!(v_fd, m.velocity(t), epsilon = 1e-8);
            let a_fd = (m.velocity(t + h) - m.velocity(t - h)) / (2.0 * h);
            assert_relative_eq!(a_fd, m.acceleration(t), epsilon = 1e-8);
            let yaw_fd = (m.yaw(t + h) - m.yaw(t - h)) / (2.0 * h);
            assert_relative_eq!(yaw_fd, m.yaw_rate(t), epsilon = 1e-8);
            // heading tangent to the path
            let fwd = m.rotation(t) * Vector3::x();
            assert_relative_eq!(fwd, m.velocity(t).normalize(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_non_positive_speed() {
        let spec = TrajectorySpec { speed: 0.0, ..TrajectorySpec::default() };
        assert!(generate_trajectory(&spec).is_err());
    }
}
