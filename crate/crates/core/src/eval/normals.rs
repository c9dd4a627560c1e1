use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::EvalError;
use crate::geometry::PointCloud;
use crate::spatial::PointGrid;

/// Least-squares plane through a point subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFit {
    pub centroid: Vector3<f64>,
    /// Unit normal, sign arbitrary until oriented.
    pub normal: Vector3<f64>,
    /// Smallest covariance eigenvalue over the eigenvalue sum.
    pub curvature: f64,
}

/// Fits a plane to `points[idx]`. Coordinates are taken relative to `origin`
/// before accumulation, which keeps the covariance well conditioned for
/// clouds far from the coordinate origin. Returns `None` for fewer than three
/// points or a subset with no dominant plane direction.
pub fn fit_plane(points: &[Vector3<f64>], idx: &[u32], origin: &Vector3<f64>) -> Option<PlaneFit> {
    if idx.len() < 3 {
        return None;
    }
    let n = idx.len() as f64;
    let mut sum = Vector3::zeros();
    for &i in idx {
        sum += points[i as usize] - origin;
    }
    let mean = sum / n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i as usize] - origin - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let (mut k, mut lo) = (0, eig.eigenvalues[0]);
    for j in 1..3 {
        if eig.eigenvalues[j] < lo {
            lo = eig.eigenvalues[j];
            k = j;
        }
    }
    let total = eig.eigenvalues.sum();
    let normal = eig.eigenvectors.column(k).into_owned();
    if !(total > 0.0) || !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    // a line or a point has two vanishing eigenvalues
    let mut sorted = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    sorted.sort_by(f64::total_cmp);
    if sorted[1] <= 1e-12 * sorted[2] {
        return None;
    }
    Some(PlaneFit {
        centroid: origin + mean,
        normal: normal.normalize(),
        curvature: lo.max(0.0) / total,
    })
}

/// Flips `n` so it points toward `viewpoint` as seen from `at`.
pub fn orient_toward(n: Vector3<f64>, at: &Vector3<f64>, viewpoint: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(&(viewpoint - at)) < 0.0 {
        -n
    } else {
        n
    }
}

/// Normal per point from the plane through its neighbors within `radius`
/// (falling back to the 12 nearest when the ball holds fewer than three),
/// oriented toward `viewpoint`. Fails if any point ends up without a normal.
pub fn estimate_normals(cloud: &PointCloud, radius: f64, viewpoint: &Vector3<f64>) -> Result<PointCloud, EvalError> {
    if cloud.is_empty() {
        return Err(EvalError::EmptyInput("cloud"));
    }
    if !(radius > 0.0) {
        return Err(EvalError::InvalidParams(format!("normal radius {radius}")));
    }
    let grid = PointGrid::build(&cloud.points, radius);
    let normals: Vec<Option<Vector3<f64>>> = cloud
        .points
        .par_iter()
        .map_init(Vec::new, |buf, p| {
            grid.within(p, radius, buf);
            if buf.len() < 3 {
                *buf = grid.knn(p, 12, 4.0 * radius).into_iter().map(|(i, _)| i).collect();
                buf.sort_unstable();
            }
            fit_plane(&cloud.points, buf, p).map(|f| orient_toward(f.normal, p, viewpoint))
        })
        .collect();
    let missing = normals.iter().filter(|n| n.is_none()).count();
    if missing > 0 {
        return Err(EvalError::NoNormals(missing));
    }
    Ok(cloud.clone().with_normals(normals.into_iter().flatten().collect()))
}
