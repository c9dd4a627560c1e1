use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{PointCloud, Pose};
use crate::spatial::PointGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    /// Fraction of closest correspondences kept each iteration.
    pub trim_ratio: f64,
    pub max_iterations: usize,
    /// Stop when the inlier RMS changes by less than this, m.
    pub tolerance: f64,
    /// Correspondences farther than this are ignored, m.
    pub max_correspondence: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            trim_ratio: 0.9,
            max_iterations: 100,
            tolerance: 1e-8,
            max_correspondence: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Maps source coordinates into the target frame.
    pub pose: Pose,
    pub rms: f64,
    pub iterations: usize,
    pub inliers: usize,
}

/// Rigid transform minimizing Σ|R a + t − b|² over paired points.
fn kabsch(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Pose {
    let n = pairs.len() as f64;
    let ca = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / n;
    let cb = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in pairs {
        h += (a - ca) * (b - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    let q = UnitQuaternion::from_matrix(&r);
    Pose::new(cb - q * ca, q)
}

/// Trimmed correspondences of `moved` source points to the target: pairs of
/// (source point before motion, target point) and their residuals.
fn correspond(
    source: &[Vector3<f64>],
    pose: &Pose,
    grid: &PointGrid,
    config: &IcpConfig,
) -> (Vec<(Vector3<f64>, Vector3<f64>)>, f64) {
    let mut matches: Vec<(usize, u32, f64)> = source
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            grid.nearest(&pose.transform_point(p), config.max_correspondence)
                .map(|(j, d2)| (i, j, d2))
        })
        .collect();
    matches.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let keep = ((matches.len() as f64 * config.trim_ratio).ceil() as usize).min(matches.len());
    matches.truncate(keep);
    let rms = if keep == 0 {
        f64::INFINITY
    } else {
        (matches.iter().map(|m| m.2).sum::<f64>() / keep as f64).sqrt()
    };
    // restore source order so the Kabsch sums do not depend on residual ranks
    matches.sort_by_key(|m| m.0);
    let pairs = matches
        .iter()
        .map(|&(i, j, _)| (source[i], grid.points()[j as usize]))
        .collect();
    (pairs, rms)
}

/// Trimmed point-to-point ICP starting from `init`.
pub fn register_icp(source: &PointCloud, target: &PointCloud, init: &Pose, config: &IcpConfig) -> Result<IcpResult, EvalError> {
    for c in [source, target] {
        if c.len() < 3 {
            return Err(EvalError::DegenerateCloud(c.len()));
        }
    }
    if !(config.trim_ratio > 0.0 && config.trim_ratio <= 1.0) || !(config.max_correspondence > 0.0) {
        return Err(EvalError::InvalidParams("trim ratio must be in (0, 1], max correspondence positive".into()));
    }
    let grid = PointGrid::build(&target.points, (config.max_correspondence / 4.0).max(1e-4));
    let mut pose = *init;
    let mut prev = f64::INFINITY;
    for it in 1..=config.max_iterations {
        let (pairs, rms) = correspond(&source.points, &pose, &grid, config);
        if pairs.len() < 3 {
            return Err(EvalError::DegenerateCloud(pairs.len()));
        }
        if rms == 0.0 || (prev - rms).abs() < config.tolerance {
            return Ok(IcpResult {
                pose,
                rms,
                iterations: it,
                inliers: pairs.len(),
            });
        }
        prev = rms;
        pose = kabsch(&pairs);
    }
    Err(EvalError::NoConvergence {
        iterations: config.max_iterations,
        rms: prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::from_points(
            (0..n)
                .map(|_| {
                    let (x, y): (f64, f64) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                    Vector3::new(x, y, 0.05 * (20.0 * x).sin() * (15.0 * y).cos() + rng.random_range(-0.02..0.02))
                })
                .collect(),
        )
    }

    #[test]
    fn identical_clouds() {
        let c = blob(500, 1);
        let r = register_icp(&c, &c, &Pose::identity(), &IcpConfig::default()).unwrap();
        assert_eq!(r.rms, 0.0);
        assert!(r.pose.position.norm() < 1e-9 && r.pose.rotation.angle() < 1e-9);
    }

    #[test]
    fn recovers_small_motion() {
        let src = blob(2000, 2);
        let motion = Pose::new(
            Vector3::new(0.02, -0.01, 0.005).normalize() * 0.02,
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 3f64.to_radians()),
        );
        let tgt = src.transformed(&motion);
        let r = register_icp(&src, &tgt, &Pose::identity(), &IcpConfig::default()).unwrap();
        assert!((r.pose.position - motion.position).norm() < 1e-6, "{:?}", r);
        assert!(r.pose.rotation.angle_to(&motion.rotation) < 1e-6);
    }

    #[test]
    fn tiny_cloud_is_degenerate() {
        let c = PointCloud::from_points(vec![Vector3::zeros(), Vector3::x()]);
        assert_eq!(
            register_icp(&c, &c, &Pose::identity(), &IcpConfig::default()),
            Err(EvalError::DegenerateCloud(2))
        );
    }
}
