use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// A set of 3D points with optional per-point attributes. Attribute vectors,
/// when present, have one entry per point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub intensities: Option<Vec<f32>>,
    pub scanner_ids: Option<Vec<u8>>,
    pub times: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    /// Attaches normals, normalizing each to unit length.
    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Self {
        assert_eq!(normals.len(), self.points.len(), "one normal per point");
        self.normals = Some(normals.into_iter().map(|n| n.normalize()).collect());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Keeps the points for which `keep` returns true, along with their
    /// attributes.
    pub fn filter(&self, keep: impl Fn(usize, &Vector3<f64>) -> bool) -> PointCloud {
        let idx: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| keep(*i, p))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> PointCloud {
        fn pick<T: Clone>(v: &Option<Vec<T>>, idx: &[usize]) -> Option<Vec<T>> {
            v.as_ref().map(|v| idx.iter().map(|&i| v[i].clone()).collect())
        }
        PointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: pick(&self.normals, idx),
            intensities: pick(&self.intensities, idx),
            scanner_ids: pick(&self.scanner_ids, idx),
            times: pick(&self.times, idx),
        }
    }

    /// Applies a rigid transform to points and normals.
    pub fn transformed(&self, pose: &super::Pose) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = pose.transform_point(p);
        }
        if let Some(normals) = &mut out.normals {
            for n in normals {
                *n = pose.transform_vector(n);
            }
        }
        out
    }
}
