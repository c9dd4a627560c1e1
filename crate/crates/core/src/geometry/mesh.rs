use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Triangles with an area at or below this (m²) are dropped on construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} but mesh has {count} vertices")]
    BadIndex { triangle: usize, index: u32, count: usize },
    #[error("uv count {uvs} does not match vertex count {vertices}")]
    UvMismatch { uvs: usize, vertices: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub uvs: Option<Vec<[f64; 2]>>,
}

impl TriangleMesh {
    /// Validates indices and drops degenerate triangles.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        Self::with_uvs(vertices, triangles, None)
    }

    pub fn with_uvs(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[u32; 3]>,
        uvs: Option<Vec<[f64; 2]>>,
    ) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= count) {
                return Err(MeshError::BadIndex { triangle: t, index, count });
            }
        }
        if let Some(uv) = &uvs {
            if uv.len() != count {
                return Err(MeshError::UvMismatch { uvs: uv.len(), vertices: count });
            }
        }
        let mut mesh = Self {
            vertices,
            triangles,
            uvs,
        };
        mesh.triangles.retain(|tri| {
            let [a, b, c] = tri.map(|i| mesh.vertices[i as usize]);
            0.5 * (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
        });
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit normal following the counter-clockwise winding.
    pub fn triangle_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Total area in m².
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Appends another mesh, offsetting its indices. UVs are kept only if both
    /// sides carry them.
    pub fn append(&mut self, other: &TriangleMesh) {
        let offset = self.vertices.len() as u32;
        self.uvs = match (self.uvs.take(), &other.uvs) {
            _ if offset == 0 => other.uvs.clone(),
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
    }

    pub fn bounding_box(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        bounding_box(&self.vertices)
    }

    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            triangles: self.triangles.clone(),
            uvs: self.uvs.clone(),
        }
    }
}

pub fn bounding_box(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_indices() {
        let err = TriangleMesh::new(vec![Vector3::zeros(); 2], vec![[0, 1, 2]]).unwrap_err();
        assert_eq!(err, MeshError::BadIndex { triangle: 0, index: 2, count: 2 });
    }

    #[test]
    fn drops_degenerate_triangles() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::x() * 2.0, Vector3::y()];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 3]]);
    }

    #[test]
    fn append_offsets_indices() {
        let a = TriangleMesh::new(vec![Vector3::zeros(), Vector3::x(), Vector3::y()], vec![[0, 1, 2]]).unwrap();
        let mut b = a.clone();
        b.append(&a);
        assert_eq!(b.triangles[1], [3, 4, 5]);
        assert!((b.area() - 1.0).abs() < 1e-15);
    }
}
