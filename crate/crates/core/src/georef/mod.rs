//! Direct georeferencing of laser profiles and plane-based estimation of the
//! scanner mounting calibration.

mod calibration;

pub use calibration::{calibrate_mounting, CalibrationReport, Plane, PlaneScan};

use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{so3, PointCloud, Pose, PoseTrack, TrackError};
use crate::sim::LaserProfile;

#[derive(Debug, Error, PartialEq)]
pub enum GeorefError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("no profiles to georeference")]
    Empty,
    #[error("profile list and calibration list differ in length ({0} vs {1})")]
    ScannerMismatch(usize, usize),
    #[error("calibration unobservable: {0}")]
    Unobservable(String),
    #[error("calibration diverged: {0}")]
    Diverged(String),
}

/// Boresight rotation and lever arm of one scanner relative to the body frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountingCalibration {
    #[serde(with = "quat_wxyz", rename = "boresight_quaternion")]
    pub boresight: UnitQuaternion<f64>,
    #[serde(rename = "lever_arm_m")]
    pub lever_arm: Vector3<f64>,
    #[serde(default)]
    pub scanner_id: u8,
}

impl MountingCalibration {
    pub fn new(boresight: UnitQuaternion<f64>, lever_arm: Vector3<f64>, scanner_id: u8) -> Self {
        Self {
            boresight,
            lever_arm,
            scanner_id,
        }
    }

    /// Side-panel mount: scanner at `height` above the body origin and
    /// `lateral` to the left (negative: right), looking down and tilted by
    /// `tilt` radians toward the vehicle centerline. The laser line runs
    /// across the driving direction.
    pub fn side_mount(lateral: f64, height: f64, tilt: f64, scanner_id: u8) -> Self {
        let (s, c) = tilt.sin_cos();
        let toward_center = -lateral.signum();
        let z_axis = Vector3::new(0.0, toward_center * s, -c);
        let x_axis = Vector3::new(0.0, c, toward_center * s);
        let y_axis = z_axis.cross(&x_axis);
        let m = nalgebra::Matrix3::from_columns(&[x_axis, y_axis, z_axis]);
        let r = nalgebra::Rotation3::from_matrix_unchecked(m);
        Self {
            boresight: UnitQuaternion::from_rotation_matrix(&r),
            lever_arm: Vector3::new(0.0, lateral, height),
            scanner_id,
        }
    }

    /// Scanner-to-body pose.
    pub fn as_pose(&self) -> Pose {
        Pose::new(self.lever_arm, self.boresight)
    }

    /// Applies a small correction: boresight on the right by `dtheta`, lever
    /// arm additively.
    pub fn perturbed(&self, dtheta: &Vector3<f64>, dlever: &Vector3<f64>) -> Self {
        Self {
            boresight: self.boresight * so3::exp(dtheta),
            lever_arm: self.lever_arm + dlever,
            scanner_id: self.scanner_id,
        }
    }
}

pub(crate) mod quat_wxyz {
    use nalgebra::{Quaternion, UnitQuaternion};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        [q.w, q.i, q.j, q.k].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Ok(UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)))
    }
}

/// Maps a sensor-frame sample `[x_s, 0, z_s]` into the global frame:
/// `p + R_b^g (lever + R_s^b [x_s, 0, z_s])`.
#[inline]
pub fn georeference_sample(body: &Pose, calib: &MountingCalibration, x_s: f64, z_s: f64) -> Vector3<f64> {
    let sensor = Vector3::new(x_s, 0.0, z_s);
    body.position + body.rotation * (calib.lever_arm + calib.boresight * sensor)
}

/// Georeferences every valid sample of one profile using the body pose
/// interpolated at the profile timestamp.
pub fn georeference_profile(
    profile: &LaserProfile,
    track: &PoseTrack,
    calib: &MountingCalibration,
) -> Result<Vec<Vector3<f64>>, GeorefError> {
    let body = track.interpolate(profile.timestamp)?;
    Ok(profile
        .samples
        .iter()
        .filter(|s| s.valid)
        .map(|s| georeference_sample(&body, calib, s.x, s.z))
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudReport {
    pub profiles_used: usize,
    pub profiles_skipped: usize,
    pub points: usize,
}

/// Georeferences the profiles of every scanner into one cloud carrying
/// `scanner_id` and `t` per point. Output is ordered by scanner, then by
/// profile timestamp, then by sample index. Profiles outside the track span
/// are skipped and counted.
pub fn build_point_cloud(
    profiles: &[Vec<LaserProfile>],
    track: &PoseTrack,
    calibs: &[MountingCalibration],
) -> Result<(PointCloud, CloudReport), GeorefError> {
    if profiles.len() != calibs.len() {
        return Err(GeorefError::ScannerMismatch(profiles.len(), calibs.len()));
    }
    if profiles.iter().all(|p| p.is_empty()) {
        return Err(GeorefError::Empty);
    }
    let mut jobs: Vec<(u8, &LaserProfile, &MountingCalibration)> = profiles
        .iter()
        .zip(calibs)
        .flat_map(|(list, c)| list.iter().map(move |p| (c.scanner_id, p, c)))
        .collect();
    jobs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.timestamp.total_cmp(&b.1.timestamp)));

    let results: Vec<Option<Vec<Vector3<f64>>>> = jobs
        .par_iter()
        .map(|(_, p, c)| georeference_profile(p, track, c).ok())
        .collect();

    let mut report = CloudReport::default();
    let total: usize = results.iter().flatten().map(Vec::len).sum();
    let mut cloud = PointCloud::from_points(Vec::with_capacity(total));
    let mut ids = Vec::with_capacity(total);
    let mut times = Vec::with_capacity(total);
    for ((id, p, _), pts) in jobs.iter().zip(results) {
        match pts {
            Some(pts) => {
                report.profiles_used += 1;
                ids.extend(std::iter::repeat_n(*id, pts.len()));
                times.extend(std::iter::repeat_n(p.timestamp, pts.len()));
                cloud.points.extend(pts);
            }
            None => report.profiles_skipped += 1,
        }
    }
    if report.profiles_skipped > 0 {
        log::warn!("skipped {} profiles outside the pose track", report.profiles_skipped);
    }
    report.points = cloud.len();
    cloud.scanner_ids = Some(ids);
    cloud.times = Some(times);
    Ok((cloud, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ProfileSample;
    use approx::assert_relative_eq;

    fn profile(t: f64, samples: &[(f64, f64, bool)]) -> LaserProfile {
        LaserProfile {
            timestamp: t,
            samples: samples.iter().map(|&(x, z, valid)| ProfileSample { x, z, valid }).collect(),
        }
    }

    fn still_track(pose: Pose) -> PoseTrack {
        PoseTrack::new(vec![0.0, 1.0], vec![pose, pose], "g").unwrap()
    }

    #[test]
    fn identity_chain() {
        let calib = MountingCalibration::new(UnitQuaternion::identity(), Vector3::zeros(), 0);
        let pts = georeference_profile(&profile(0.5, &[(0.1, 1.0, true)]), &still_track(Pose::identity()), &calib).unwrap();
        assert_eq!(pts[0], Vector3::new(0.1, 0.0, 1.0));
    }

    #[test]
    fn pure_translation() {
        let calib = MountingCalibration::new(UnitQuaternion::identity(), Vector3::zeros(), 0);
        let track = still_track(Pose::from_translation(Vector3::new(10.0, 20.0, 30.0)));
        let pts = georeference_profile(&profile(0.5, &[(0.25, 1.5, true), (9.0, 9.0, false)]), &track, &calib).unwrap();
        assert_eq!(pts, vec![Vector3::new(10.25, 20.0, 31.5)]);
    }

    #[test]
    fn side_mount_geometry() {
        let c = MountingCalibration::side_mount(0.7, 0.2, 50f64.to_radians(), 0);
        let look = c.boresight * Vector3::z();
        assert!(look.z < 0.0 && look.y < 0.0, "left scanner looks down and right");
        assert_relative_eq!(look.z, -(50f64.to_radians().cos()), epsilon = 1e-12);
        assert_relative_eq!(c.boresight * Vector3::y(), Vector3::x(), epsilon = 1e-12);
        let r = MountingCalibration::side_mount(-0.7, 0.2, 50f64.to_radians(), 1);
        assert!((r.boresight * Vector3::z()).y > 0.0);
    }

    #[test]
    fn skipped_profiles_are_counted() {
        let calib = MountingCalibration::new(UnitQuaternion::identity(), Vector3::zeros(), 0);
        let profiles = vec![vec![profile(0.5, &[(0.0, 1.0, true)]), profile(5.0, &[(0.0, 1.0, true)])]];
        let (cloud, report) = build_point_cloud(&profiles, &still_track(Pose::identity()), &[calib]).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(report.profiles_skipped, 1);
        assert_eq!(report.profiles_used, 1);
    }

    #[test]
    fn calibration_json_schema() {
        let c = MountingCalibration::side_mount(-0.7, 0.2, 0.8, 1);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("boresight_quaternion") && text.contains("lever_arm_m"));
        let back: MountingCalibration = serde_json::from_str(&text).unwrap();
        assert!(so3::angle_between(&back.boresight, &c.boresight) < 1e-15);
    }
}
