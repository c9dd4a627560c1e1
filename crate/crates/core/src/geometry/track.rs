//! Time-indexed pose sequences and their cubic interpolation.
//!
//! Positions use a piecewise cubic Hermite curve whose knot tangents are the
//! derivative of the local Lagrange polynomial through up to five knots
//! centered on the knot. This keeps the curve C¹ at interior knots and makes it
//! reproduce any cubic trajectory exactly on interior segments. Rotations use
//! spherical cubic (squad) blending over the four bracketing knots after
//! shortest-arc sign correction. The first and last segment fall back to
//! linear / spherical-linear interpolation.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pose::Pose;
use super::so3;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("query time {t} outside track span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("track needs at least 2 entries for interpolation, has {0}")]
    InsufficientKnots(usize),
    #[error("timestamps must be strictly increasing (index {0})")]
    NonMonotonic(usize),
    #[error("times and poses differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseTrack {
    times: Vec<f64>,
    poses: Vec<Pose>,
    pub frame: String,
}

impl PoseTrack {
    pub fn new(times: Vec<f64>, poses: Vec<Pose>, frame: impl Into<String>) -> Result<Self, TrackError> {
        if times.len() != poses.len() {
            return Err(TrackError::LengthMismatch(times.len(), poses.len()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(TrackError::NonMonotonic(i + 1));
        }
        Ok(Self {
            times,
            poses,
            frame: frame.into(),
        })
    }

    pub fn from_entries(entries: Vec<(f64, Pose)>, frame: impl Into<String>) -> Result<Self, TrackError> {
        let (times, poses) = entries.into_iter().unzip();
        Self::new(times, poses, frame)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, &Pose)> {
        self.times.iter().copied().zip(self.poses.iter())
    }

    pub fn start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn end(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn covers(&self, t: f64) -> bool {
        matches!((self.start(), self.end()), (Some(a), Some(b)) if t >= a && t <= b)
    }

    /// Applies `f` to every pose, keeping timestamps.
    pub fn map_poses(&self, f: impl Fn(&Pose) -> Pose) -> PoseTrack {
        PoseTrack {
            times: self.times.clone(),
            poses: self.poses.iter().map(f).collect(),
            frame: self.frame.clone(),
        }
    }

    pub fn interpolate(&self, t: f64) -> Result<Pose, TrackError> {
        interpolate_pose(self, t)
    }
}

pub fn interpolate_pose(track: &PoseTrack, t: f64) -> Result<Pose, TrackError> {
    let n = track.len();
    if n < 2 {
        return Err(TrackError::InsufficientKnots(n));
    }
    let times = &track.times;
    let (start, end) = (times[0], times[n - 1]);
    if !(t >= start && t <= end) {
        return Err(TrackError::OutOfRange { t, start, end });
    }
    // segment k: times[k] <= t < times[k + 1]
    let k = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
        Ok(i) => return Ok(track.poses[i]),
        Err(i) => i - 1,
    };
    let (t0, t1) = (times[k], times[k + 1]);
    let h = t1 - t0;
    let u = (t - t0) / h;
    let (p0, p1) = (&track.poses[k], &track.poses[k + 1]);

    let interior = k >= 1 && k + 2 < n;
    if !interior {
        return Ok(Pose::new(
            p0.position + (p1.position - p0.position) * u,
            so3::slerp(&p0.rotation, &p1.rotation, u),
        ));
    }

    let m0 = knot_tangent(track, k);
    let m1 = knot_tangent(track, k + 1);
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let position = p0.position * h00 + m0 * (h10 * h) + p1.position * h01 + m1 * (h11 * h);

    let rotation = squad(
        &track.poses[k - 1].rotation,
        &p0.rotation,
        &p1.rotation,
        &track.poses[k + 2].rotation,
        u,
    );
    Ok(Pose::new(position, rotation))
}

/// Velocity estimate at knot `i` from the derivative of the Lagrange
/// polynomial through knots `max(0, i-2) ..= min(n-1, i+2)`.
fn knot_tangent(track: &PoseTrack, i: usize) -> Vector3<f64> {
    let n = track.len();
    let lo = i.saturating_sub(2);
    let hi = (i + 2).min(n - 1);
    let ti = track.times[i];
    // node offsets relative to t_i keep precision on large absolute timebases
    let offsets: Vec<f64> = (lo..=hi).map(|j| track.times[j] - ti).collect();
    let center = i - lo;
    let mut tangent = Vector3::zeros();
    for (a, &xa) in offsets.iter().enumerate() {
        let weight = if a == center {
            offsets
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != center)
                .map(|(_, &xb)| 1.0 / (0.0 - xb))
                .sum::<f64>()
        } else {
            let num: f64 = offsets
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != center && b != a)
                .map(|(_, &xb)| 0.0 - xb)
                .product();
            let den: f64 = offsets
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &xb)| xa - xb)
                .product();
            num / den
        };
        tangent += track.poses[lo + a].position * weight;
    }
    tangent
}

fn squad(
    q_prev: &UnitQuaternion<f64>,
    q0: &UnitQuaternion<f64>,
    q1: &UnitQuaternion<f64>,
    q_next: &UnitQuaternion<f64>,
    u: f64,
) -> UnitQuaternion<f64> {
    let q_prev = so3::align_sign(q_prev, q0);
    let q1 = so3::align_sign(q1, q0);
    let q_next = so3::align_sign(q_next, &q1);
    let s0 = squad_control(&q_prev, q0, &q1);
    let s1 = squad_control(q0, &q1, &q_next);
    let outer = so3::slerp(q0, &q1, u);
    let inner = so3::slerp(&s0, &s1, u);
    so3::slerp(&outer, &inner, 2.0 * u * (1.0 - u))
}

fn squad_control(prev: &UnitQuaternion<f64>, q: &UnitQuaternion<f64>, next: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let inv = q.inverse();
    let a = so3::log(&(inv * next));
    let b = so3::log(&(inv * prev));
    q * so3::exp(&(-(a + b) * 0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track_from(times: &[f64], f: impl Fn(f64) -> Pose) -> PoseTrack {
        PoseTrack::new(times.to_vec(), times.iter().map(|&t| f(t)).collect(), "g").unwrap()
    }

    fn rotating(t: f64) -> Pose {
        Pose::new(
            Vector3::new(t, 0.5 * t * t, -t),
            so3::exp(&Vector3::new(0.1 * t, 0.3 * t.sin(), 0.2 * t)),
        )
    }

    #[test]
    fn knot_queries_are_exact() {
        let times: Vec<f64> = (0..8).map(|i| i as f64 * 0.37).collect();
        let track = track_from(&times, rotating);
        for (t, p) in track.entries() {
            assert_eq!(interpolate_pose(&track, t).unwrap(), *p);
        }
    }

    #[test]
    fn reproduces_linear_motion() {
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let track = track_from(&times, |t| Pose::from_translation(Vector3::new(2.0 * t, -t, 0.5)));
        for k in 0..9 {
            let t = (times[k] + times[k + 1]) / 2.0;
            let p = interpolate_pose(&track, t).unwrap();
            assert_relative_eq!(p.position, Vector3::new(2.0 * t, -t, 0.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn reproduces_cubic_on_interior_segments() {
        let times = [0.0, 0.5, 1.1, 1.5, 2.2, 3.0];
        let track = track_from(&times, |t| Pose::from_translation(Vector3::new(t * t * t, 0.0, 0.0)));
        for k in 1..times.len() - 2 {
            for s in [0.1, 0.5, 0.77] {
                let t = times[k] + s * (times[k + 1] - times[k]);
                let p = interpolate_pose(&track, t).unwrap();
                assert!((p.position.x - t * t * t).abs() < 1e-9, "t={t}");
            }
        }
    }

    #[test]
    fn reproduces_random_cubics_on_large_timebase() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let c: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cubic = |t: f64, o: usize| c[o] + c[o + 1] * t + c[o + 2] * t * t + c[o + 3] * t * t * t;
            let mut times = vec![0.0];
            for _ in 0..6 {
                let last = *times.last().unwrap();
                times.push(last + rng.random_range(0.05..0.5));
            }
            let base = 1000.0;
            let abs: Vec<f64> = times.iter().map(|t| t + base).collect();
            let track = track_from(&abs, |t| {
                let s = t - base;
                Pose::from_translation(Vector3::new(cubic(s, 0), cubic(s, 4), cubic(s, 8)))
            });
            for k in 1..times.len() - 2 {
                let s = times[k] + rng.random::<f64>() * (times[k + 1] - times[k]);
                let p = interpolate_pose(&track, s + base).unwrap();
                let expect = Vector3::new(cubic(s, 0), cubic(s, 4), cubic(s, 8));
                assert!((p.position - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn continuity_at_random_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let track = track_from(&times, rotating);
        for _ in 0..100 {
            let t = rng.random_range(0.0..4.7);
            let a = interpolate_pose(&track, t).unwrap();
            let b = interpolate_pose(&track, t + 1e-9).unwrap();
            assert!((a.position - b.position).norm() < 1e-7);
            assert!(so3::angle_between(&a.rotation, &b.rotation) < 1e-7);
        }
    }

    #[test]
    fn invariant_to_quaternion_sign_flips() {
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let track = track_from(&times, rotating);
        let flipped = PoseTrack::new(
            times.clone(),
            track
                .poses()
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i % 2 == 1 {
                        Pose::new(p.position, UnitQuaternion::new_unchecked(-p.rotation.into_inner()))
                    } else {
                        *p
                    }
                })
                .collect(),
            "g",
        )
        .unwrap();
        for t in [0.1, 0.45, 1.0, 1.31, 2.0, 2.65] {
            let a = interpolate_pose(&track, t).unwrap();
            let b = interpolate_pose(&flipped, t).unwrap();
            assert!(so3::angle_between(&a.rotation, &b.rotation) < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let track = track_from(&[0.0, 1.0], |_| Pose::identity());
        assert!(matches!(interpolate_pose(&track, 1.5), Err(TrackError::OutOfRange { .. })));
        let single = track_from(&[0.0], |_| Pose::identity());
        assert_eq!(interpolate_pose(&single, 0.0), Err(TrackError::InsufficientKnots(1)));
        assert_eq!(
            PoseTrack::new(vec![0.0, 0.0], vec![Pose::identity(); 2], "g"),
            Err(TrackError::NonMonotonic(1))
        );
    }
}
