//! End-to-end orchestration: a single JSON configuration drives simulation,
//! calibration, trajectory smoothing, georeferencing, evaluation, texture
//! baking and exposure control. Each stage exists both as an in-memory
//! function and as a file-based command that writes its artifacts and a
//! run manifest.

mod config;
mod manifest;
mod runner;
mod stages;

pub use config::{CalibrationSetup, EvaluationSetup, ExposureSetup, MountSpec, PipelineConfig, TextureSetup};
pub use manifest::{config_hash, file_sha256, ArtifactRecord, RunManifest};
pub use runner::{run_command, Command, CommandArgs};
pub use stages::{
    autoexpose_scene, bake_scene, calibrate, camera_rig, evaluate_clouds, evaluate_scene, georeference, sample_leaf_surfaces,
    scene_colors, simulate, solve, true_mounts, CalibrationOutcome, CloudComparison, DistanceSummary, LeafEvaluation, SceneEvaluation,
    Simulation,
};

use thiserror::Error;

use crate::eval::EvalError;
use crate::exposure::ExposureError;
use crate::georef::GeorefError;
use crate::io::IoError;
use crate::sim::SimError;
use crate::texture::TextureError;
use crate::trajectory::TrajectoryError;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration, missing or malformed input.
    #[error("validation: {0}")]
    Validation(String),
    /// A solver diverged, a system was singular or unobservable.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Numerical(_) => 3,
        }
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<ExposureError> for PipelineError {
    fn from(e: ExposureError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<TextureError> for PipelineError {
    fn from(e: TextureError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<TrajectoryError> for PipelineError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Diverged(_) | TrajectoryError::SingularSystem(_) => PipelineError::Numerical(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<GeorefError> for PipelineError {
    fn from(e: GeorefError) -> Self {
        match e {
            GeorefError::Unobservable(_) | GeorefError::Diverged(_) => PipelineError::Numerical(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoConvergence { .. } | EvalError::DegenerateCloud(_) | EvalError::NoNormals(_) => {
                PipelineError::Numerical(e.to_string())
            }
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}
