use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::{IcpConfig, M3C2Params};
use crate::exposure::{ControllerConfig, ExposureState};
use crate::georef::{MountingCalibration, Plane};
use crate::sim::{InertialConfig, ScannerModel, SceneSpec, TrajectorySpec};
use crate::texture::BakeConfig;
use crate::trajectory::SmootherConfig;

/// Everything a pipeline run depends on. Serialized as JSON; the hash of the
/// serialized form identifies a run in its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed for every noise stream.
    pub seed: u64,
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub sensors: InertialConfig,
    pub scanner: ScannerModel,
    pub mounts: Vec<MountSpec>,
    pub calibration: CalibrationSetup,
    pub smoother: SmootherConfig,
    pub evaluation: EvaluationSetup,
    pub texture: TextureSetup,
    pub exposure: ExposureSetup,
}

/// Side-panel scanner placement relative to the body origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountSpec {
    /// Positive to the left, m.
    pub lateral: f64,
    /// Above the body origin, m.
    pub height: f64,
    /// Inward tilt from nadir, degrees.
    pub tilt_deg: f64,
}

impl MountSpec {
    pub fn calibration(&self, scanner_id: u8) -> MountingCalibration {
        MountingCalibration::side_mount(self.lateral, self.height, self.tilt_deg.to_radians(), scanner_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSetup {
    pub planes: Vec<Plane>,
    /// Length of the calibration drive, s.
    pub duration: f64,
    pub speed: f64,
    /// Yaw rate during the drive, rad/s.
    pub yaw_rate: f64,
    pub pitch: f64,
    /// Magnitude of the boresight error applied to the initial guess, degrees.
    pub boresight_error_deg: f64,
    /// Magnitude of the lever-arm error applied to the initial guess, m.
    pub lever_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSetup {
    /// Spacing of the samples drawn on the true leaf surfaces, m.
    pub reference_spacing: f64,
    /// Reconstructed points farther than this from every reference sample
    /// are not leaf points, m.
    pub crop_distance: f64,
    pub icp_align: bool,
    /// Voxel size used to thin the compared cloud for ICP, m.
    pub icp_voxel: f64,
    pub icp: IcpConfig,
    pub m3c2: M3C2Params,
    pub histogram_bins: usize,
    /// Voxel size applied before ball pivoting, m.
    pub bpa_voxel: f64,
    /// Ball radii as multiples of the median point spacing.
    pub bpa_radius_factors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSetup {
    pub resolution: usize,
    /// Cameras per side of the track.
    pub cameras_per_side: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Focal length, pixels.
    pub focal: f64,
    pub camera_height: f64,
    pub camera_offset: f64,
    pub bake: BakeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureSetup {
    pub initial: ExposureState,
    pub controller: ControllerConfig,
    /// Radiometric scale of the simulated scene.
    pub scene_gain: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let tilt_deg = 50.0;
        Self {
            seed: 1,
            scene: SceneSpec::default(),
            trajectory: TrajectorySpec::default(),
            sensors: InertialConfig::default(),
            scanner: ScannerModel::default(),
            mounts: vec![
                MountSpec { lateral: 0.7, height: 0.2, tilt_deg },
                MountSpec { lateral: -0.7, height: 0.2, tilt_deg },
            ],
            calibration: CalibrationSetup {
                planes: vec![
                    Plane::new(Vector3::z(), Vector3::zeros()),
                    Plane::new(Vector3::new(0.0, -0.5, 1.0), Vector3::new(0.0, 0.0, 0.2)),
                    Plane::new(Vector3::new(0.6, 0.0, 1.0), Vector3::new(0.0, 0.0, 0.1)),
                ],
                duration: 1.0,
                speed: 0.1,
                yaw_rate: 0.3,
                pitch: 0.02,
                boresight_error_deg: 2.0,
                lever_error: 0.02,
            },
            smoother: SmootherConfig::default(),
            evaluation: EvaluationSetup {
                reference_spacing: 0.001,
                crop_distance: 0.02,
                icp_align: true,
                icp_voxel: 0.002,
                icp: IcpConfig {
                    max_correspondence: 0.01,
                    tolerance: 1e-6,
                    ..IcpConfig::default()
                },
                m3c2: M3C2Params::default(),
                histogram_bins: 41,
                bpa_voxel: 0.001,
                bpa_radius_factors: vec![2.0, 4.0, 8.0],
            },
            texture: TextureSetup {
                resolution: 1024,
                cameras_per_side: 10,
                image_width: 320,
                image_height: 240,
                focal: 300.0,
                camera_height: 1.2,
                camera_offset: 0.8,
                bake: BakeConfig::default(),
            },
            exposure: ExposureSetup {
                initial: ExposureState::default(),
                controller: ControllerConfig::default(),
                scene_gain: 200.0,
            },
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation(msg.into())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks cross-field consistency; per-module parameter checks run when
    /// the stages start.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scanner.validate()?;
        self.evaluation.m3c2.validate()?;
        self.exposure.initial.validate()?;
        if self.mounts.is_empty() || self.mounts.len() > 255 {
            return Err(invalid("need between 1 and 255 scanner mounts"));
        }
        if self.mounts.iter().any(|m| ![m.lateral, m.height, m.tilt_deg].iter().all(|v| v.is_finite())) {
            return Err(invalid("mount parameters must be finite"));
        }
        let c = &self.calibration;
        if !(c.duration > 0.0 && c.speed >= 0.0 && c.boresight_error_deg >= 0.0 && c.lever_error >= 0.0) {
            return Err(invalid("calibration drive needs a positive duration and non-negative errors"));
        }
        let e = &self.evaluation;
        let positive = [e.reference_spacing, e.crop_distance, e.icp_voxel, e.bpa_voxel];
        if !positive.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(invalid("evaluation spacings must be positive"));
        }
        if e.bpa_radius_factors.is_empty() || e.bpa_radius_factors.iter().any(|f| !(*f > 0.0)) {
            return Err(invalid("ball radius factors must be positive"));
        }
        if e.histogram_bins == 0 {
            return Err(invalid("histogram needs at least one bin"));
        }
        let t = &self.texture;
        if t.resolution == 0 || t.image_width == 0 || t.image_height == 0 || !(t.focal > 0.0) {
            return Err(invalid("texture and image sizes must be positive"));
        }
        if !(self.exposure.scene_gain > 0.0 && self.exposure.scene_gain.is_finite()) {
            return Err(invalid("scene gain must be positive"));
        }
        if self.smoother.antenna_lever != self.sensors.antenna_lever {
            log::warn!("smoother antenna lever differs from the simulated one");
        }
        Ok(())
    }

    /// Independent seed for the `k`-th noise stream.
    pub fn stream_seed(&self, k: u64) -> u64 {
        self.seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}
