use std::ops::Range;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::TriangleMesh;

/// Leaf modeled as a paraboloid cap `z = curvature/2 * (x² + y²)` over the
/// ellipse `(x/a)² + (y/b)² <= 1` in its local frame, then tilted about the
/// local y axis and rotated by `yaw` about the global z axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSpec {
    pub center: Vector3<f64>,
    /// Semi-axis lengths (a, b), m.
    pub semi_axes: [f64; 2],
    /// 1/m; 0 is a flat elliptic disk.
    #[serde(default)]
    pub curvature: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub tilt: f64,
}

impl LeafSpec {
    pub fn flat_disk(center: Vector3<f64>, radius: f64) -> Self {
        Self {
            center,
            semi_axes: [radius, radius],
            curvature: 0.0,
            yaw: 0.0,
            tilt: 0.0,
        }
    }

    fn orientation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw)
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), self.tilt)
    }

    fn local_point(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new(x, y, 0.5 * self.curvature * (x * x + y * y))
    }

    pub fn surface_point(&self, x: f64, y: f64) -> Vector3<f64> {
        self.center + self.orientation() * self.local_point(x, y)
    }

    /// Upper-side unit normal at local (x, y).
    pub fn surface_normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let n = Vector3::new(-self.curvature * x, -self.curvature * y, 1.0).normalize();
        self.orientation() * n
    }

    /// Radius of a sphere around `center` enclosing the patch.
    pub fn bounding_radius(&self) -> f64 {
        let r = self.semi_axes[0].max(self.semi_axes[1]);
        let sag = 0.5 * self.curvature.abs() * r * r;
        r.hypot(sag)
    }

    /// Exact surface area of the patch. The radial integral has a closed form;
    /// the remaining periodic angular integral is evaluated by the trapezoid
    /// rule, which converges geometrically for smooth periodic integrands.
    pub fn analytic_area(&self) -> f64 {
        let [a, b] = self.semi_axes;
        let k = self.curvature;
        if k.abs() < 1e-12 {
            return std::f64::consts::PI * a * b;
        }
        let n = 4096;
        let mut sum = 0.0;
        for i in 0..n {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let r2 = (a * b).powi(2) / ((b * phi.cos()).powi(2) + (a * phi.sin()).powi(2));
            sum += ((1.0 + k * k * r2).powf(1.5) - 1.0) / (3.0 * k * k);
        }
        sum * 2.0 * std::f64::consts::PI / n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomLeaves {
    pub count: usize,
    /// [x_min, x_max, y_min, y_max] of leaf centers.
    pub region: [f64; 4],
    /// Height of leaf centers above the ground, m.
    pub height: [f64; 2],
    /// Semi-axis length range, m.
    pub size: [f64; 2],
    pub curvature: [f64; 2],
    pub max_tilt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    pub rings: usize,
    pub segments: usize,
}

impl Default for Tessellation {
    fn default() -> Self {
        Self { rings: 12, segments: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub ground_height: f64,
    /// [x_min, x_max, y_min, y_max], m.
    pub ground_extent: [f64; 4],
    pub ground_cell: f64,
    #[serde(default)]
    pub leaves: Vec<LeafSpec>,
    #[serde(default)]
    pub random_leaves: Option<RandomLeaves>,
    #[serde(default)]
    pub tessellation: Tessellation,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            ground_height: 0.0,
            ground_extent: [-0.2, 3.2, -1.0, 1.0],
            ground_cell: 0.1,
            leaves: Vec::new(),
            random_leaves: Some(RandomLeaves {
                count: 10,
                region: [0.3, 2.7, -0.35, 0.35],
                height: [0.08, 0.25],
                size: [0.03, 0.06],
                curvature: [0.0, 6.0],
                max_tilt: 0.5,
            }),
            tessellation: Tessellation::default(),
            seed: 7,
        }
    }
}

/// Synthesized scene mesh plus per-patch bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub ground: Range<usize>,
    /// Triangle range per leaf, parallel to `leaves`.
    pub leaf_triangles: Vec<Range<usize>>,
    pub leaves: Vec<LeafSpec>,
    pub ground_height: f64,
}

impl Scene {
    pub fn ground_area(&self) -> f64 {
        self.ground.clone().map(|t| self.mesh.triangle_area(t)).sum()
    }

    pub fn leaf_mesh_area(&self, leaf: usize) -> f64 {
        self.leaf_triangles[leaf].clone().map(|t| self.mesh.triangle_area(t)).sum()
    }

    /// Index of the leaf owning triangle `t`, if any.
    pub fn leaf_of_triangle(&self, t: usize) -> Option<usize> {
        self.leaf_triangles.iter().position(|r| r.contains(&t))
    }
}

pub fn synthesize_scene(spec: &SceneSpec) -> Result<Scene, SimError> {
    let [x0, x1, y0, y1] = spec.ground_extent;
    if !(x1 > x0 && y1 > y0 && spec.ground_cell > 0.0) {
        return Err(SimError::InvalidSpec("empty ground extent or non-positive cell".into()));
    }
    let tess = spec.tessellation;
    if tess.rings == 0 || tess.segments < 3 {
        return Err(SimError::InvalidSpec("tessellation needs >= 1 ring and >= 3 segments".into()));
    }
    let mut leaves = spec.leaves.clone();
    if let Some(random) = &spec.random_leaves {
        leaves.extend(random_leaves(random, spec.ground_height, spec.seed, &leaves)?);
    }
    for (i, leaf) in leaves.iter().enumerate() {
        validate_leaf(leaf, spec.ground_height).map_err(|m| SimError::InvalidSpec(format!("leaf {i}: {m}")))?;
        for (j, other) in leaves.iter().enumerate().take(i) {
            if overlaps(leaf, other) {
                return Err(SimError::InvalidSpec(format!("leaves {j} and {i} overlap")));
            }
        }
    }

    // UV atlas: ground plus each leaf get one cell of a k×k grid
    let patches = leaves.len() + 1;
    let atlas = (patches as f64).sqrt().ceil() as usize;
    let cell_uv = |patch: usize, u: f64, v: f64| -> [f64; 2] {
        let (cx, cy) = ((patch % atlas) as f64, (patch / atlas) as f64);
        let margin = 0.02;
        let s = (1.0 - 2.0 * margin) / atlas as f64;
        [
            (cx + margin * atlas as f64 + u * s * atlas as f64) / atlas as f64,
            (cy + margin * atlas as f64 + v * s * atlas as f64) / atlas as f64,
        ]
    };

    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();

    let nx = ((x1 - x0) / spec.ground_cell).ceil().max(1.0) as usize;
    let ny = ((y1 - y0) / spec.ground_cell).ceil().max(1.0) as usize;
    for j in 0..=ny {
        for i in 0..=nx {
            let (u, v) = (i as f64 / nx as f64, j as f64 / ny as f64);
            vertices.push(Vector3::new(x0 + u * (x1 - x0), y0 + v * (y1 - y0), spec.ground_height));
            uvs.push(cell_uv(0, u, v));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let ground = 0..triangles.len();

    let mut leaf_triangles = Vec::with_capacity(leaves.len());
    for (li, leaf) in leaves.iter().enumerate() {
        let base = vertices.len() as u32;
        let first = triangles.len();
        let [a, b] = leaf.semi_axes;
        vertices.push(leaf.surface_point(0.0, 0.0));
        uvs.push(cell_uv(li + 1, 0.5, 0.5));
        for r in 1..=tess.rings {
            let rho = r as f64 / tess.rings as f64;
            for s in 0..tess.segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / tess.segments as f64;
                let (sn, cs) = phi.sin_cos();
                vertices.push(leaf.surface_point(a * rho * cs, b * rho * sn));
                uvs.push(cell_uv(li + 1, 0.5 + 0.5 * rho * cs, 0.5 + 0.5 * rho * sn));
            }
        }
        let ring = |r: usize, s: usize| base + 1 + ((r - 1) * tess.segments + s % tess.segments) as u32;
        for s in 0..tess.segments {
            triangles.push([base, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..tess.rings {
            for s in 0..tess.segments {
                triangles.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
                triangles.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
            }
        }
        leaf_triangles.push(first..triangles.len());
    }

    let mesh = TriangleMesh::with_uvs(vertices, triangles, Some(uvs))
        .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    Ok(Scene {
        mesh,
        ground,
        leaf_triangles,
        leaves,
        ground_height: spec.ground_height,
    })
}

fn validate_leaf(leaf: &LeafSpec, ground: f64) -> Result<(), String> {
    let [a, b] = leaf.semi_axes;
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err("semi-axes must be positive".into());
    }
    if !(leaf.curvature.is_finite() && leaf.center.iter().all(|c| c.is_finite())) {
        return Err("non-finite parameters".into());
    }
    if leaf.center.z - leaf.bounding_radius() <= ground {
        return Err("patch intersects the ground".into());
    }
    Ok(())
}

fn overlaps(a: &LeafSpec, b: &LeafSpec) -> bool {
    (a.center - b.center).norm() < a.bounding_radius() + b.bounding_radius()
}

fn random_leaves(spec: &RandomLeaves, ground: f64, seed: u64, fixed: &[LeafSpec]) -> Result<Vec<LeafSpec>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LeafSpec> = Vec::with_capacity(spec.count);
    let range = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] };
    let mut attempts = 0;
    while out.len() < spec.count {
        attempts += 1;
        if attempts > 1000 * spec.count.max(1) {
            return Err(SimError::InvalidSpec("could not place random leaves without overlap".into()));
        }
        let leaf = LeafSpec {
            center: Vector3::new(
                range(&mut rng, [spec.region[0], spec.region[1]]),
                range(&mut rng, [spec.region[2], spec.region[3]]),
                ground + range(&mut rng, spec.height),
            ),
            semi_axes: [range(&mut rng, spec.size), range(&mut rng, spec.size)],
            curvature: range(&mut rng, spec.curvature),
            yaw: rng.random_range(0.0..std::f64::consts::TAU),
            tilt: range(&mut rng, [-spec.max_tilt, spec.max_tilt]),
        };
        let clear = fixed.iter().chain(out.iter()).all(|o| !overlaps(&leaf, o));
        if clear && validate_leaf(&leaf, ground).is_ok() {
            out.push(leaf);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(leaves: Vec<LeafSpec>) -> SceneSpec {
        SceneSpec {
            ground_height: 0.0,
            ground_extent: [0.0, 2.0, -0.5, 0.5],
            ground_cell: 0.1,
            leaves,
            random_leaves: None,
            tessellation: Tessellation::default(),
            seed: 1,
        }
    }

    #[test]
    fn ground_only_area() {
        let scene = synthesize_scene(&bare(vec![])).unwrap();
        assert!((scene.mesh.area() - 2.0).abs() < 1e-9);
        assert!(scene.leaf_triangles.is_empty());
    }

    #[test]
    fn flat_disk_area_within_one_percent() {
        let leaf = LeafSpec::flat_disk(Vector3::new(1.0, 0.0, 0.2), 0.05);
        let scene = synthesize_scene(&bare(vec![leaf])).unwrap();
        let exact = std::f64::consts::PI * 0.05 * 0.05;
        let rel = (scene.leaf_mesh_area(0) - exact).abs() / exact;
        assert!(rel < 0.01, "rel {rel}");
    }

    #[test]
    fn curved_leaf_area_converges_to_analytic() {
        let leaf = LeafSpec {
            center: Vector3::new(1.0, 0.0, 0.3),
            semi_axes: [0.06, 0.04],
            curvature: 8.0,
            yaw: 0.4,
            tilt: 0.3,
        };
        let mut spec = bare(vec![leaf.clone()]);
        spec.tessellation = Tessellation { rings: 64, segments: 256 };
        let scene = synthesize_scene(&spec).unwrap();
        let rel = (scene.leaf_mesh_area(0) - leaf.analytic_area()).abs() / leaf.analytic_area();
        assert!(rel < 1e-3, "rel {rel}");
        // circular cap closed form
        let cap = LeafSpec { semi_axes: [0.05, 0.05], ..leaf };
        let k: f64 = 8.0;
        let closed = 2.0 * std::f64::consts::PI / (3.0 * k * k) * ((1.0 + k * k * 0.0025f64).powf(1.5) - 1.0);
        assert!((cap.analytic_area() - closed).abs() < 1e-14);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synthesize_scene(&SceneSpec::default()).unwrap();
        let b = synthesize_scene(&SceneSpec::default()).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.leaves.len(), 10);
    }

    #[test]
    fn rejects_degenerate_and_overlapping_leaves() {
        let bad = LeafSpec::flat_disk(Vector3::new(1.0, 0.0, 0.2), 0.0);
        assert!(matches!(synthesize_scene(&bare(vec![bad])), Err(SimError::InvalidSpec(_))));
        let a = LeafSpec::flat_disk(Vector3::new(1.0, 0.0, 0.2), 0.05);
        let b = LeafSpec::flat_disk(Vector3::new(1.02, 0.0, 0.2), 0.05);
        assert!(matches!(synthesize_scene(&bare(vec![a, b])), Err(SimError::InvalidSpec(_))));
    }
}
