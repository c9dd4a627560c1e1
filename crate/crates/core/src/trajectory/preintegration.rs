use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::TrajectoryError;
use crate::geometry::so3;
use crate::sim::ImuSample;

pub type Matrix9 = SMatrix<f64, 9, 9>;
type Matrix9x6 = SMatrix<f64, 9, 6>;

/// White-noise densities used to weight preintegrated measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuNoise {
    /// rad/s/√Hz
    pub gyro: f64,
    /// m/s²/√Hz
    pub accel: f64,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self { gyro: 0.01, accel: 0.05 }
    }
}

/// Relative motion between two keyframes summarized from the IMU samples in
/// between, expressed in the body frame of the first keyframe. Gravity is
/// excluded; the residual adds it back.
#[derive(Clone, Debug, PartialEq)]
pub struct PreintegratedDelta {
    pub delta_rotation: UnitQuaternion<f64>,
    pub delta_velocity: Vector3<f64>,
    pub delta_position: Vector3<f64>,
    pub duration: f64,
    /// Ordered (rotation, velocity, position).
    pub covariance: Matrix9,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    /// Rows (rotation, velocity, position), columns (gyro bias, accel bias).
    pub bias_jacobian: Matrix9x6,
}

impl PreintegratedDelta {
    fn block(&self, row: usize, col: usize) -> Matrix3<f64> {
        self.bias_jacobian.fixed_view::<3, 3>(3 * row, 3 * col).into_owned()
    }

    pub fn d_rotation_d_gyro_bias(&self) -> Matrix3<f64> {
        self.block(0, 0)
    }

    pub fn d_velocity_d_gyro_bias(&self) -> Matrix3<f64> {
        self.block(1, 0)
    }

    pub fn d_velocity_d_accel_bias(&self) -> Matrix3<f64> {
        self.block(1, 1)
    }

    pub fn d_position_d_gyro_bias(&self) -> Matrix3<f64> {
        self.block(2, 0)
    }

    pub fn d_position_d_accel_bias(&self) -> Matrix3<f64> {
        self.block(2, 1)
    }

    /// First-order correction of the deltas to new bias values.
    pub fn corrected(&self, gyro_bias: &Vector3<f64>, accel_bias: &Vector3<f64>) -> (UnitQuaternion<f64>, Vector3<f64>, Vector3<f64>) {
        let dbg = gyro_bias - self.gyro_bias;
        let dba = accel_bias - self.accel_bias;
        (
            self.delta_rotation * so3::exp(&(self.d_rotation_d_gyro_bias() * dbg)),
            self.delta_velocity + self.d_velocity_d_gyro_bias() * dbg + self.d_velocity_d_accel_bias() * dba,
            self.delta_position + self.d_position_d_gyro_bias() * dbg + self.d_position_d_accel_bias() * dba,
        )
    }
}

fn lerp_sample(a: &ImuSample, b: &ImuSample, t: f64) -> ImuSample {
    let u = (t - a.timestamp) / (b.timestamp - a.timestamp);
    ImuSample {
        timestamp: t,
        angular_rate: a.angular_rate.lerp(&b.angular_rate, u),
        acceleration: a.acceleration.lerp(&b.acceleration, u),
    }
}

/// Median spacing of the sample timestamps.
pub fn nominal_period(samples: &[ImuSample]) -> Option<f64> {
    let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    Some(gaps[gaps.len() / 2])
}

/// Samples restricted to `[t0, t1]`, with the end points linearly interpolated.
fn window(samples: &[ImuSample], t0: f64, t1: f64) -> Result<Vec<ImuSample>, TrajectoryError> {
    let first = samples.first().ok_or(TrajectoryError::EmptyStream("imu"))?;
    let last = samples.last().ok_or(TrajectoryError::EmptyStream("imu"))?;
    if !(t1 > t0) || t0 < first.timestamp || t1 > last.timestamp {
        return Err(TrajectoryError::NoOverlap(format!(
            "interval [{t0}, {t1}] not covered by imu samples [{}, {}]",
            first.timestamp, last.timestamp
        )));
    }
    let i0 = samples.partition_point(|s| s.timestamp <= t0);
    let i1 = samples.partition_point(|s| s.timestamp < t1);
    let start = if samples[i0 - 1].timestamp == t0 {
        samples[i0 - 1]
    } else {
        lerp_sample(&samples[i0 - 1], &samples[i0], t0)
    };
    let end = if i1 < samples.len() && samples[i1].timestamp == t1 {
        samples[i1]
    } else {
        lerp_sample(&samples[i1 - 1], &samples[i1], t1)
    };
    let mut out = Vec::with_capacity(i1 - i0 + 2);
    out.push(start);
    out.extend_from_slice(&samples[i0..i1]);
    out.push(end);
    Ok(out)
}

/// Midpoint integration of bias-corrected samples over `[t0, t1]`.
///
/// Rotation uses the mean angular rate of each interval; velocity and
/// position use the mean of the rotated specific forces at both ends.
/// Covariance and bias Jacobians follow the first-order error recursion of
/// this same discrete scheme.
pub fn preintegrate_imu(
    samples: &[ImuSample],
    gyro_bias: &Vector3<f64>,
    accel_bias: &Vector3<f64>,
    t0: f64,
    t1: f64,
    noise: &ImuNoise,
) -> Result<PreintegratedDelta, TrajectoryError> {
    let period = nominal_period(samples).ok_or(TrajectoryError::EmptyStream("imu"))?;
    let pts = window(samples, t0, t1)?;
    if let Some(w) = pts.windows(2).find(|w| w[1].timestamp - w[0].timestamp > 5.0 * period + 1e-12) {
        return Err(TrajectoryError::GapTooLarge {
            at: w[0].timestamp,
            gap: w[1].timestamp - w[0].timestamp,
        });
    }

    let mut dr = UnitQuaternion::identity();
    let mut dv = Vector3::zeros();
    let mut dp = Vector3::zeros();
    let mut cov = Matrix9::zeros();
    let mut jac = Matrix9x6::zeros();
    let i3 = Matrix3::identity();

    for w in pts.windows(2) {
        let dt = w[1].timestamp - w[0].timestamp;
        if dt <= 0.0 {
            continue;
        }
        let omega = 0.5 * (w[0].angular_rate + w[1].angular_rate) - gyro_bias;
        let a0 = w[0].acceleration - accel_bias;
        let a1 = w[1].acceleration - accel_bias;
        let step = so3::exp(&(omega * dt));
        let dr_next = dr * step;
        let r0 = dr.to_rotation_matrix().into_inner();
        let r1 = dr_next.to_rotation_matrix().into_inner();
        let a_mid = 0.5 * (r0 * a0 + r1 * a1);

        // error recursion: phi' = Phi phi + Jr dt n_g,
        // a_mid' = -½ (R0 [a0]x phi + R1 [a1]x phi') + R_bar n_a
        let phi = step.to_rotation_matrix().into_inner().transpose();
        let jr_dt = so3::right_jacobian(&(omega * dt)) * dt;
        let m0 = r0 * so3::hat(&a0);
        let m1 = r1 * so3::hat(&a1);
        let r_bar = 0.5 * (r0 + r1);

        let mut f = Matrix9::identity();
        let da_dphi = -0.5 * (m0 + m1 * phi);
        f.fixed_view_mut::<3, 3>(0, 0).copy_from(&phi);
        f.fixed_view_mut::<3, 3>(3, 0).copy_from(&(da_dphi * dt));
        f.fixed_view_mut::<3, 3>(6, 0).copy_from(&(da_dphi * (0.5 * dt * dt)));
        f.fixed_view_mut::<3, 3>(6, 3).copy_from(&(i3 * dt));

        let mut g = Matrix9x6::zeros();
        let da_dng = -0.5 * m1 * jr_dt;
        g.fixed_view_mut::<3, 3>(0, 0).copy_from(&jr_dt);
        g.fixed_view_mut::<3, 3>(3, 0).copy_from(&(da_dng * dt));
        g.fixed_view_mut::<3, 3>(6, 0).copy_from(&(da_dng * (0.5 * dt * dt)));
        g.fixed_view_mut::<3, 3>(3, 3).copy_from(&(r_bar * dt));
        g.fixed_view_mut::<3, 3>(6, 3).copy_from(&(r_bar * (0.5 * dt * dt)));

        let q_g = noise.gyro * noise.gyro / dt;
        let q_a = noise.accel * noise.accel / dt;
        let mut q = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            q[(i, i)] = q_g;
            q[(i + 3, i + 3)] = q_a;
        }
        cov = f * cov * f.transpose() + g * q * g.transpose();

        // a bias acts like a noise sample of opposite sign
        jac = f * jac - g;

        dp += dv * dt + 0.5 * a_mid * dt * dt;
        dv += a_mid * dt;
        dr = dr_next;
    }
    let cov = 0.5 * (cov + cov.transpose());

    Ok(PreintegratedDelta {
        delta_rotation: dr,
        delta_velocity: dv,
        delta_position: dp,
        duration: t1 - t0,
        covariance: cov,
        gyro_bias: *gyro_bias,
        accel_bias: *accel_bias,
        bias_jacobian: jac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(rate: f64, dur: f64, w: Vector3<f64>, a: Vector3<f64>) -> Vec<ImuSample> {
        let n = (dur * rate).round() as usize;
        (0..=n)
            .map(|k| ImuSample {
                timestamp: k as f64 / rate,
                angular_rate: w,
                acceleration: a,
            })
            .collect()
    }

    #[test]
    fn zero_input_is_identity() {
        let s = constant(100.0, 1.0, Vector3::zeros(), Vector3::zeros());
        let d = preintegrate_imu(&s, &Vector3::zeros(), &Vector3::zeros(), 0.0, 1.0, &ImuNoise::default()).unwrap();
        assert_eq!(d.delta_rotation, UnitQuaternion::identity());
        assert_eq!(d.delta_velocity, Vector3::zeros());
        assert_eq!(d.delta_position, Vector3::zeros());
    }

    #[test]
    fn constant_force_kinematics() {
        let a = Vector3::new(0.3, -1.2, 9.81);
        let s = constant(100.0, 2.0, Vector3::zeros(), a);
        let d = preintegrate_imu(&s, &Vector3::zeros(), &Vector3::zeros(), 0.0, 2.0, &ImuNoise::default()).unwrap();
        assert_relative_eq!(d.delta_velocity, a * 2.0, epsilon = 1e-9);
        assert_relative_eq!(d.delta_position, a * 2.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_rate_rotation_angle() {
        let w = 0.37;
        let s = constant(100.0, 3.0, Vector3::new(0.0, 0.0, w), Vector3::zeros());
        let d = preintegrate_imu(&s, &Vector3::zeros(), &Vector3::zeros(), 0.2, 2.95, &ImuNoise::default()).unwrap();
        assert!((d.delta_rotation.angle() - w * 2.75).abs() < 1e-9);
    }

    #[test]
    fn bias_jacobian_matches_reintegration() {
        let s: Vec<ImuSample> = (0..=150)
            .map(|k| {
                let t = k as f64 / 100.0;
                ImuSample {
                    timestamp: t,
                    angular_rate: Vector3::new(0.2 * t.sin(), -0.1, 0.3 * (2.0 * t).cos()),
                    acceleration: Vector3::new(0.5 * t, 0.2 * t.cos(), 9.81 + 0.1 * t),
                }
            })
            .collect();
        let noise = ImuNoise::default();
        let (bg, ba) = (Vector3::new(0.01, -0.02, 0.005), Vector3::new(0.05, 0.02, -0.03));
        let d = preintegrate_imu(&s, &bg, &ba, 0.0, 1.5, &noise).unwrap();
        let h = 1e-6;
        for col in 0..6 {
            let mut e = nalgebra::Vector6::zeros();
            e[col] = h;
            let (bgp, bap) = (bg + e.fixed_rows::<3>(0), ba + e.fixed_rows::<3>(3));
            let (bgm, bam) = (bg - e.fixed_rows::<3>(0), ba - e.fixed_rows::<3>(3));
            let p = preintegrate_imu(&s, &bgp, &bap, 0.0, 1.5, &noise).unwrap();
            let m = preintegrate_imu(&s, &bgm, &bam, 0.0, 1.5, &noise).unwrap();
            let drot = so3::log(&(m.delta_rotation.inverse() * p.delta_rotation)) / (2.0 * h);
            let dvel = (p.delta_velocity - m.delta_velocity) / (2.0 * h);
            let dpos = (p.delta_position - m.delta_position) / (2.0 * h);
            let col_a = d.bias_jacobian.column(col);
            assert_relative_eq!(drot, col_a.fixed_rows::<3>(0).into_owned(), epsilon = 1e-6);
            assert_relative_eq!(dvel, col_a.fixed_rows::<3>(3).into_owned(), epsilon = 1e-6);
            assert_relative_eq!(dpos, col_a.fixed_rows::<3>(6).into_owned(), epsilon = 1e-6);
        }
    }

    #[test]
    fn covariance_grows_and_is_symmetric() {
        let s = constant(100.0, 2.0, Vector3::new(0.0, 0.0, 0.1), Vector3::new(0.0, 0.0, 9.81));
        let n = ImuNoise::default();
        let a = preintegrate_imu(&s, &Vector3::zeros(), &Vector3::zeros(), 0.0, 1.0, &n).unwrap();
        let b = preintegrate_imu(&s, &Vector3::zeros(), &Vector3::zeros(), 0.0, 2.0, &n).unwrap();
        assert!(b.covariance.trace() > a.covariance.trace());
        assert_eq!(b.covariance, b.covariance.transpose());
        assert!(b.covariance.symmetric_eigenvalues().min() > -1e-15);
        // rotation block follows the random walk of the gyro noise
        assert_relative_eq!(a.covariance[(2, 2)], n.gyro * n.gyro * 1.0, max_relative = 1e-6);
    }

    #[test]
    fn gaps_are_detected() {
        let mut s = constant(100.0, 2.0, Vector3::zeros(), Vector3::zeros());
        s.drain(50..120);
        let err = preintegrate_imu(&s, &Vector3::zeros(), &Vector3::zeros(), 0.0, 2.0, &ImuNoise::default());
        assert!(matches!(err, Err(TrajectoryError::GapTooLarge { .. })));
    }
}
