use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{GeorefError, MountingCalibration};
use crate::geometry::{so3, PoseTrack};
use crate::sim::LaserProfile;

/// Plane `normal · p = offset` in the global frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, point_on_plane: Vector3<f64>) -> Self {
        let n = normal.normalize();
        Self {
            normal: n,
            offset: n.dot(&point_on_plane),
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Profiles of one scanner whose valid samples all lie on `plane`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneScan {
    pub plane: Plane,
    pub profiles: Vec<LaserProfile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub points: usize,
    pub iterations: usize,
    pub initial_rms: f64,
    pub final_rms: f64,
    pub converged: bool,
}

struct Observation {
    normal_body: Vector3<f64>,
    /// `offset - normal · p_body`, the distance the lever and the rotated
    /// sample must cover along the normal in the body frame
    target: f64,
    sample: Vector3<f64>,
}

const MAX_POINTS_PER_SCAN: usize = 4000;
const MAX_ITERATIONS: usize = 100;

/// Levenberg-Marquardt over the 6 mounting parameters, minimizing
/// point-to-plane distances of the georeferenced samples. The boresight is
/// updated on the right, `B <- B Exp(dtheta)`.
pub fn calibrate_mounting(
    scans: &[PlaneScan],
    track: &PoseTrack,
    init: &MountingCalibration,
) -> Result<(MountingCalibration, CalibrationReport), GeorefError> {
    check_normal_rank(scans)?;
    let obs = collect_observations(scans, track)?;
    if obs.len() < 6 {
        return Err(GeorefError::Unobservable(format!("only {} plane samples", obs.len())));
    }

    let mut calib = init.clone();
    let (mut h, mut g, mut cost) = linearize(&obs, &calib);
    let initial_rms = (2.0 * cost / obs.len() as f64).sqrt();
    if !cost.is_finite() {
        return Err(GeorefError::Diverged("non-finite initial residual".into()));
    }
    check_information(&h)?;

    let mut lambda = 1e-4;
    let mut iterations = 0;
    let mut converged = initial_rms < 1e-12;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut damped = h;
        for i in 0..6 {
            damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step: Vector6<f64> = chol.solve(&(-g));
        let candidate = apply(&calib, &step);
        let (h2, g2, cost2) = linearize(&obs, &candidate);
        if !cost2.is_finite() {
            return Err(GeorefError::Diverged("non-finite residual".into()));
        }
        if cost2 < cost {
            let rel = (cost - cost2) / cost.max(f64::MIN_POSITIVE);
            calib = candidate;
            (h, g, cost) = (h2, g2, cost2);
            lambda = (lambda / 10.0).max(1e-12);
            if rel < 1e-12 || step.norm() < 1e-13 || cost < 1e-28 {
                converged = true;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // no descent direction left: at a minimum up to round-off
                converged = true;
            }
        }
    }
    if !converged {
        return Err(GeorefError::Diverged(format!("no convergence after {MAX_ITERATIONS} iterations")));
    }
    let report = CalibrationReport {
        points: obs.len(),
        iterations,
        initial_rms,
        final_rms: (2.0 * cost / obs.len() as f64).sqrt(),
        converged,
    };
    Ok((calib, report))
}

fn apply(calib: &MountingCalibration, step: &Vector6<f64>) -> MountingCalibration {
    calib.perturbed(&step.fixed_rows::<3>(0).into_owned(), &step.fixed_rows::<3>(3).into_owned())
}

fn check_normal_rank(scans: &[PlaneScan]) -> Result<(), GeorefError> {
    let mut scatter = Matrix3::zeros();
    for s in scans {
        let n = s.plane.normal.normalize();
        scatter += n * n.transpose();
    }
    let eig = SymmetricEigen::new(scatter).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo / hi < 1e-6 {
        return Err(GeorefError::Unobservable(format!(
            "plane normals span rank < 3 ({} plane(s))",
            scans.len()
        )));
    }
    Ok(())
}

fn check_information(h: &Matrix6<f64>) -> Result<(), GeorefError> {
    let eig = SymmetricEigen::new(*h).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo / hi < 1e-14 {
        return Err(GeorefError::Unobservable("normal equations are rank deficient".into()));
    }
    Ok(())
}

fn collect_observations(scans: &[PlaneScan], track: &PoseTrack) -> Result<Vec<Observation>, GeorefError> {
    let mut obs = Vec::new();
    for scan in scans {
        let total: usize = scan.profiles.iter().map(LaserProfile::valid_count).sum();
        let stride = total.div_ceil(MAX_POINTS_PER_SCAN).max(1);
        let mut k = 0usize;
        for p in &scan.profiles {
            let body = track.interpolate(p.timestamp)?;
            let normal_body = body.rotation.inverse() * scan.plane.normal;
            let target = scan.plane.offset - scan.plane.normal.dot(&body.position);
            for s in p.samples.iter().filter(|s| s.valid) {
                if k.is_multiple_of(stride) {
                    obs.push(Observation {
                        normal_body,
                        target,
                        sample: Vector3::new(s.x, 0.0, s.z),
                    });
                }
                k += 1;
            }
        }
    }
    Ok(obs)
}

/// Gauss-Newton system `(J^T J, J^T r, ½ r^T r)` at `calib`.
fn linearize(obs: &[Observation], calib: &MountingCalibration) -> (Matrix6<f64>, Vector6<f64>, f64) {
    let b = calib.boresight.to_rotation_matrix().into_inner();
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for o in obs {
        let r = o.normal_body.dot(&(calib.lever_arm + b * o.sample)) - o.target;
        // d(B Exp(t) s)/dt = -B [s]x
        let nb = b.transpose() * o.normal_body;
        let j_rot = -(so3::hat(&o.sample).transpose() * nb);
        let j = Vector6::new(j_rot.x, j_rot.y, j_rot.z, o.normal_body.x, o.normal_body.y, o.normal_body.z);
        h += j * j.transpose();
        g += j * r;
        cost += 0.5 * r * r;
    }
    (h, g, cost)
}
