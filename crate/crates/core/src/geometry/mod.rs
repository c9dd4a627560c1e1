//! Rigid transforms, rotation utilities, pose tracks and the mesh / point
//! cloud containers shared across the crate.

mod cloud;
mod mesh;
mod pose;
pub mod so3;
mod track;

pub use cloud::PointCloud;
pub use mesh::{bounding_box, MeshError, TriangleMesh, DEGENERATE_AREA};
pub use pose::{compose, transform_point, Pose};
pub use track::{interpolate_pose, PoseTrack, TrackError};

pub type Vec3 = nalgebra::Vector3<f64>;
