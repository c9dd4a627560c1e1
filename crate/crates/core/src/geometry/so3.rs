//! Rotation-group helpers: exponential/logarithm maps, skew matrices and the
//! right Jacobian, all in terms of nalgebra unit quaternions.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector to unit quaternion.
pub fn exp(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = phi.norm();
    let q = if theta < SMALL_ANGLE {
        let half = phi * 0.5;
        Quaternion::new(1.0 - theta * theta / 8.0, half.x, half.y, half.z)
    } else {
        let (s, c) = (theta * 0.5).sin_cos();
        let axis = phi * (s / theta);
        Quaternion::new(c, axis.x, axis.y, axis.z)
    };
    UnitQuaternion::new_normalize(q)
}

/// Unit quaternion to rotation vector, choosing the representative with
/// angle in [0, pi].
pub fn log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let n = v.norm();
    if n < SMALL_ANGLE {
        // atan2(n, w) / n expanded around n = 0
        v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w))
    } else {
        v * (2.0 * n.atan2(w) / n)
    }
}

/// Right Jacobian of SO(3).
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    if theta < 1e-5 {
        return Matrix3::identity() - k * 0.5 + k * k / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() - k * ((1.0 - theta.cos()) / t2) + k * k * ((theta - theta.sin()) / (t2 * theta))
}

/// Inverse of the right Jacobian of SO(3).
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    if theta < 1e-5 {
        return Matrix3::identity() + k * 0.5 + k * k / 12.0;
    }
    let t2 = theta * theta;
    let coeff = 1.0 / t2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + k * 0.5 + k * k * coeff
}

/// Flips `q` onto the hemisphere of `reference` so that slerp-style blends
/// take the shortest arc.
pub fn align_sign(q: &UnitQuaternion<f64>, reference: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.coords.dot(&reference.coords) < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    }
}

/// Spherical linear interpolation along the shortest arc.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    let b = align_sign(b, a);
    let delta = log(&(a.inverse() * b));
    a * exp(&(delta * u))
}

/// Angle of the relative rotation between two quaternions, sign-agnostic.
pub fn angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    log(&(a.inverse() * b)).norm()
}

/// Heading of the body x-axis, clockwise from north (the global +y axis).
pub fn heading_of(x_axis: &Vector3<f64>) -> f64 {
    yaw_to_heading(x_axis.y.atan2(x_axis.x))
}

/// Pitch of the body x-axis above the horizontal plane, nose-up positive.
pub fn pitch_of(x_axis: &Vector3<f64>) -> f64 {
    x_axis.z.atan2(x_axis.x.hypot(x_axis.y))
}

/// Converts a compass heading (clockwise from north, global frame x=east,
/// y=north) into the counter-clockwise yaw about +z used internally. The
/// mapping is an involution, so the same function converts back.
pub fn heading_to_yaw(heading: f64) -> f64 {
    wrap_angle(std::f64::consts::FRAC_PI_2 - heading)
}

/// See [`heading_to_yaw`].
pub fn yaw_to_heading(yaw: f64) -> f64 {
    heading_to_yaw(yaw)
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Rotation from yaw (ccw about z), pitch (nose-up) and roll, applied as
/// yaw then pitch then roll in the body frame.
pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> UnitQuaternion<f64> {
    // Nose-up pitch is a negative rotation about the body y-axis (left).
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
        * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -pitch)
        * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll)
}
