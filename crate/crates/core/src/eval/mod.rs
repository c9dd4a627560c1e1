//! Reconstruction quality: registration, cloud-to-cloud distances, surface
//! reconstruction and leaf-area completeness.

mod area;
mod bpa;
mod icp;
mod m3c2;
mod normals;
mod report;
mod stats;

pub use area::{aggregate_abs_percent, completeness_report, leaf_area, LeafAreaReport};
pub use bpa::{median_spacing, reconstruct_surface_bpa, BpaStats};
pub use icp::{register_icp, IcpConfig, IcpResult};
pub use m3c2::{compute_m3c2, M3C2Distance, M3C2Output, M3C2Params};
pub use normals::{estimate_normals, fit_plane, orient_toward, PlaneFit};
pub use report::{format_table, TableRow};
pub use stats::{precision_stats, Histogram, PrecisionReport};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("cloud has {0} points, at least 3 are required")]
    DegenerateCloud(usize),
    #[error("icp did not converge in {iterations} iterations (rms {rms:e} m)")]
    NoConvergence { iterations: usize, rms: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("normals could not be estimated for {0} points")]
    NoNormals(usize),
    #[error("reference area must be positive, got {0}")]
    NonPositiveReference(f64),
}
