use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LaserProfile, ProfileSample, SimError};
use crate::geometry::{PoseTrack, TriangleMesh};
use crate::georef::MountingCalibration;
use crate::raycast::MeshBvh;

/// Line triangulation scanner. Rays fan out in the sensor XZ plane,
/// `(sin a, 0, cos a)` for `a` evenly spaced in `[-fan_half_angle, fan_half_angle]`.
/// Range gating applies to the depth coordinate `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScannerModel {
    pub points_per_profile: usize,
    pub fan_half_angle: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub scan_rate: f64,
}

impl Default for ScannerModel {
    fn default() -> Self {
        // 1920 points at 0.5 mm pitch span 0.96 m at 1 m depth
        Self {
            points_per_profile: 1920,
            fan_half_angle: (1920.0 * 0.0005 / 2.0f64).atan(),
            min_range: 0.390,
            max_range: 2.000,
            range_noise_sigma: 12e-6,
            scan_rate: 200.0,
        }
    }
}

impl ScannerModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        if self.points_per_profile < 2 {
            return bad("points_per_profile must be >= 2");
        }
        if !(self.min_range > 0.0 && self.min_range < self.max_range) {
            return bad("need 0 < min_range < max_range");
        }
        if !(self.fan_half_angle > 0.0 && self.fan_half_angle < std::f64::consts::FRAC_PI_2) {
            return bad("fan_half_angle must lie in (0, pi/2)");
        }
        if !(self.scan_rate > 0.0 && self.range_noise_sigma >= 0.0) {
            return bad("scan_rate must be positive and noise non-negative");
        }
        Ok(())
    }

    /// Unit ray directions in the sensor frame.
    pub fn ray_directions(&self) -> Vec<Vector3<f64>> {
        let n = self.points_per_profile;
        (0..n)
            .map(|k| {
                let a = -self.fan_half_angle + 2.0 * self.fan_half_angle * k as f64 / (n - 1) as f64;
                Vector3::new(a.sin(), 0.0, a.cos())
            })
            .collect()
    }
}

/// Independent random stream for one profile of one scanner.
pub fn profile_rng(seed: u64, scanner_id: u8, profile_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scanner_id as u64) << 56) | profile_index);
    rng
}

/// Simulates every profile whose timestamp `t0 + k / scan_rate` falls
/// inside the track span.
pub fn simulate_laser_profiles(
    scene: &MeshBvh,
    track: &PoseTrack,
    calib: &MountingCalibration,
    model: &ScannerModel,
    seed: u64,
) -> Result<Vec<LaserProfile>, SimError> {
    model.validate()?;
    let (Some(t0), Some(t1)) = (track.start(), track.end()) else {
        return Err(SimError::EmptyTrack);
    };
    if track.len() < 2 {
        return Err(SimError::EmptyTrack);
    }
    let count = ((t1 - t0) * model.scan_rate + 1e-9).floor() as u64 + 1;
    let rays = model.ray_directions();
    let mount = calib.as_pose();

    let profiles = (0..count)
        .into_par_iter()
        .map(|k| {
            let t = t0 + k as f64 / model.scan_rate;
            let body = track.interpolate(t).map_err(|_| SimError::EmptyTrack)?;
            let sensor = body.compose(&mount);
            let rot: Matrix3<f64> = sensor.rotation.to_rotation_matrix().into_inner();
            let mut rng = profile_rng(seed, calib.scanner_id, k);
            let samples = rays
                .iter()
                .map(|d| {
                    let dir = rot * d;
                    let reach = model.max_range / d.z * 1.001;
                    let Some(hit) = scene.first_hit(&sensor.position, &dir, 0.0, reach) else {
                        return ProfileSample::INVALID;
                    };
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let r = hit.t + model.range_noise_sigma * noise;
                    let (x, z) = (r * d.x, r * d.z);
                    if z < model.min_range || z > model.max_range {
                        ProfileSample::INVALID
                    } else {
                        ProfileSample { x, z, valid: true }
                    }
                })
                .collect();
            Ok(LaserProfile { timestamp: t, samples })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(profiles)
}

/// Convenience wrapper building the ray-cast acceleration structure.
pub fn simulate_laser_profiles_on_mesh(
    scene: &TriangleMesh,
    track: &PoseTrack,
    calib: &MountingCalibration,
    model: &ScannerModel,
    seed: u64,
) -> Result<Vec<LaserProfile>, SimError> {
    simulate_laser_profiles(&MeshBvh::build(scene), track, calib, model, seed)
}
