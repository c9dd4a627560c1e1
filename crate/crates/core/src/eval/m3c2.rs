use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normals::{fit_plane, orient_toward};
use super::EvalError;
use crate::geometry::{bounding_box, PointCloud};
use crate::spatial::PointGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M3C2Params {
    /// Diameter of the neighborhood used for the normal, m.
    pub normal_scale: f64,
    /// Cylinder radius, m.
    pub projection_radius: f64,
    /// Cylinder half-length along the normal, m.
    pub max_depth: f64,
    /// Fraction of reference points used as core points.
    pub core_point_subsample: f64,
    /// Minimum reference neighbors for a normal.
    pub min_neighbors: usize,
    /// Normals are flipped toward this point. `None` places it high above
    /// the reference cloud.
    pub viewpoint: Option<Vector3<f64>>,
}

impl Default for M3C2Params {
    fn default() -> Self {
        Self {
            normal_scale: 0.010,
            projection_radius: 0.005,
            max_depth: 0.020,
            core_point_subsample: 1.0,
            min_neighbors: 10,
            viewpoint: None,
        }
    }
}

impl M3C2Params {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidParams(m));
        if !(self.normal_scale > 0.0 && self.projection_radius > 0.0 && self.max_depth > 0.0) {
            return bad("scales must be positive".into());
        }
        if self.projection_radius > self.normal_scale {
            return bad(format!(
                "projection radius {} exceeds normal scale {}",
                self.projection_radius, self.normal_scale
            ));
        }
        if !(self.core_point_subsample > 0.0 && self.core_point_subsample <= 1.0) {
            return bad(format!("core point subsample {} outside (0, 1]", self.core_point_subsample));
        }
        if self.min_neighbors < 3 {
            return bad("at least 3 neighbors are needed for a normal".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M3C2Distance {
    pub core_index: usize,
    pub core: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub distance: f64,
    pub reference_count: usize,
    pub compared_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct M3C2Output {
    /// Ordered by core-point index.
    pub distances: Vec<M3C2Distance>,
    pub core_points: usize,
    /// Core points with too few reference neighbors for a normal.
    pub skipped_sparse: usize,
    /// Core points whose compared cylinder was empty.
    pub skipped_empty: usize,
}

impl M3C2Output {
    pub fn values(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d.distance).collect()
    }
}

/// Indices of the core points: `ceil(n * ratio)` evenly strided reference points.
pub(crate) fn core_indices(n: usize, ratio: f64) -> Vec<usize> {
    let m = ((n as f64 * ratio).ceil() as usize).clamp(1, n);
    (0..m).map(|k| k * n / m).collect()
}

/// Sum of `points[i] - core` over the cylinder members, plus their count.
pub(crate) fn cylinder_sum(
    points: &[Vector3<f64>],
    candidates: &[u32],
    core: &Vector3<f64>,
    normal: &Vector3<f64>,
    radius: f64,
    half_length: f64,
) -> (Vector3<f64>, usize) {
    let mut sum = Vector3::zeros();
    let mut count = 0;
    for &i in candidates {
        let v = points[i as usize] - core;
        let h = v.dot(normal);
        let r2 = (v - normal * h).norm_squared();
        if h.abs() <= half_length && r2 <= radius * radius {
            sum += v;
            count += 1;
        }
    }
    (sum, count)
}

fn default_viewpoint(points: &[Vector3<f64>]) -> Vector3<f64> {
    let (lo, hi) = bounding_box(points).expect("nonempty");
    let mut c = (lo + hi) / 2.0;
    c.z = hi.z + 1000.0;
    c
}

/// Signed distances from `reference` to `compared` along locally estimated
/// reference normals, averaged inside projection cylinders.
pub fn compute_m3c2(reference: &PointCloud, compared: &PointCloud, params: &M3C2Params) -> Result<M3C2Output, EvalError> {
    params.validate()?;
    if reference.is_empty() {
        return Err(EvalError::EmptyInput("reference cloud"));
    }
    let viewpoint = params.viewpoint.unwrap_or_else(|| default_viewpoint(&reference.points));
    let normal_radius = params.normal_scale / 2.0;
    let reach = params.projection_radius.hypot(params.max_depth) * (1.0 + 1e-9);
    let ref_grid = PointGrid::build(&reference.points, reach.max(normal_radius));
    let cmp_grid = PointGrid::build(&compared.points, reach);
    let cores = core_indices(reference.len(), params.core_point_subsample);

    enum Outcome {
        Sparse,
        Empty,
        Hit(M3C2Distance),
    }
    let outcomes: Vec<Outcome> = cores
        .par_iter()
        .map_init(Vec::new, |buf, &ci| {
            let core = reference.points[ci];
            ref_grid.within(&core, normal_radius, buf);
            if buf.len() < params.min_neighbors {
                return Outcome::Sparse;
            }
            let Some(fit) = fit_plane(&reference.points, buf, &core) else {
                return Outcome::Sparse;
            };
            let n = orient_toward(fit.normal, &core, &viewpoint);
            cmp_grid.within(&core, reach, buf);
            let (cs, cc) = cylinder_sum(&compared.points, buf, &core, &n, params.projection_radius, params.max_depth);
            if cc == 0 {
                return Outcome::Empty;
            }
            ref_grid.within(&core, reach, buf);
            let (rs, rc) = cylinder_sum(&reference.points, buf, &core, &n, params.projection_radius, params.max_depth);
            let distance = (cs / cc as f64 - rs / rc as f64).dot(&n);
            Outcome::Hit(M3C2Distance {
                core_index: ci,
                core,
                normal: n,
                distance,
                reference_count: rc,
                compared_count: cc,
            })
        })
        .collect();

    let mut out = M3C2Output {
        core_points: cores.len(),
        ..Default::default()
    };
    for o in outcomes {
        match o {
            Outcome::Sparse => out.skipped_sparse += 1,
            Outcome::Empty => out.skipped_empty += 1,
            Outcome::Hit(d) => out.distances.push(d),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sheet(n: usize, spacing: f64, z: f64) -> PointCloud {
        let side = (n as f64).sqrt() as usize;
        PointCloud::from_points(
            (0..side * side)
                .map(|k| Vector3::new((k % side) as f64 * spacing, (k / side) as f64 * spacing, z))
                .collect(),
        )
    }

    #[test]
    fn identical_clouds_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = sheet(900, 1e-3, 0.0);
        for p in &mut c.points {
            p.z += rng.random_range(-1e-4..1e-4);
        }
        let out = compute_m3c2(&c, &c, &M3C2Params::default()).unwrap();
        assert_eq!(out.distances.len(), 900);
        assert!(out.distances.iter().all(|d| d.distance.abs() <= 1e-12));
    }

    #[test]
    fn planar_offset_is_recovered() {
        let r = sheet(900, 1e-3, 0.0);
        let c = sheet(900, 1e-3, 0.004);
        let out = compute_m3c2(&r, &c, &M3C2Params::default()).unwrap();
        assert!(!out.distances.is_empty());
        for d in &out.distances {
            assert!((d.distance - 0.004).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_cylinders_are_counted() {
        let r = sheet(900, 1e-3, 0.0);
        let c = PointCloud::from_points(vec![Vector3::new(0.0, 0.0, 0.001)]);
        let out = compute_m3c2(&r, &c, &M3C2Params::default()).unwrap();
        assert_eq!(out.distances.len() + out.skipped_empty + out.skipped_sparse, out.core_points);
        assert!(out.skipped_empty > 800);
    }

    #[test]
    fn params_are_validated() {
        let c = sheet(100, 1e-3, 0.0);
        let p = M3C2Params {
            projection_radius: 0.02,
            ..Default::default()
        };
        assert!(matches!(compute_m3c2(&c, &c, &p), Err(EvalError::InvalidParams(_))));
        let p = M3C2Params {
            core_point_subsample: 0.0,
            ..Default::default()
        };
        assert!(compute_m3c2(&c, &c, &p).is_err());
    }

    #[test]
    fn subsampling_is_strided() {
        assert_eq!(core_indices(10, 0.5), vec![0, 2, 4, 6, 8]);
        assert_eq!(core_indices(3, 1.0), vec![0, 1, 2]);
        assert_eq!(core_indices(5, 0.01), vec![0]);
    }
}
