//! Bounding-volume hierarchy over a triangle mesh for first-hit and
//! occlusion ray queries.

use nalgebra::Vector3;

use crate::geometry::TriangleMesh;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vector3::repeat(f64::INFINITY),
            hi: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    /// Slab test; returns the entry distance if the ray hits within `t_max`.
    fn hit(&self, origin: &Vector3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.lo[a] - origin[a]) * inv_dir[a];
            let mut far = (self.hi[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf is discarded by max/min
            t0 = if near > t0 { near } else { t0 };
            t1 = if far < t1 { far } else { t1 };
            if t0 > t1 * (1.0 + 4.0 * f64::EPSILON) {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: u32, count: u32 },
    Inner { bounds: Aabb, left: u32, right: u32 },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    /// Distance along the (unit or not) direction, in units of `dir`.
    pub t: f64,
    pub triangle: usize,
    /// Barycentric weights of corners 1 and 2.
    pub u: f64,
    pub v: f64,
}

/// Immutable BVH; holds a copy of the triangle corners for cache locality.
#[derive(Clone, Debug)]
pub struct MeshBvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Vector3<f64>; 3]>,
}

impl MeshBvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Vector3<f64>; 3]> = (0..mesh.triangles.len()).map(|t| mesh.corners(t)).collect();
        let centroids: Vec<Vector3<f64>> = tris.iter().map(|c| (c[0] + c[1] + c[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        if !tris.is_empty() {
            build_recursive(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        }
        Self { nodes, order, tris }
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    /// Nearest intersection with `t` in `(t_min, t_max)`.
    pub fn first_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<RayHit> {
        self.traverse(origin, dir, t_min, t_max, false)
    }

    /// True if anything blocks the ray within `(t_min, t_max)`.
    pub fn occluded(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64, t_max: f64) -> bool {
        self.traverse(origin, dir, t_min, t_max, true).is_some()
    }

    fn traverse(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        t_max: f64,
        any: bool,
    ) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = dir.map(|d| 1.0 / d);
        let mut best: Option<RayHit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut depth = 0usize;
        if self.nodes[0].bounds().hit(origin, &inv_dir, limit).is_some() {
            depth = 1;
        }
        while depth > 0 {
            depth -= 1;
            let n = stack[depth];
            match &self.nodes[n as usize] {
                Node::Leaf { bounds, start, count } => {
                    if bounds.hit(origin, &inv_dir, limit).is_none() {
                        continue;
                    }
                    for &ti in &self.order[*start as usize..(*start + *count) as usize] {
                        if let Some((t, u, v)) = intersect(&self.tris[ti as usize], origin, dir) {
                            // ties broken by triangle index for determinism
                            let better = match best {
                                None => true,
                                Some(b) => t < b.t || (t == b.t && (ti as usize) < b.triangle),
                            };
                            if t > t_min && t < t_max && t <= limit && better {
                                best = Some(RayHit { t, triangle: ti as usize, u, v });
                                limit = t;
                                if any {
                                    return best;
                                }
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left as usize].bounds().hit(origin, &inv_dir, limit);
                    let dr = self.nodes[*right as usize].bounds().hit(origin, &inv_dir, limit);
                    match (dl, dr) {
                        (Some(a), Some(b)) => {
                            // push the farther child first so the nearer is popped next
                            let (far, near) = if a <= b { (*right, *left) } else { (*left, *right) };
                            stack[depth] = far;
                            stack[depth + 1] = near;
                            depth += 2;
                        }
                        (Some(_), None) => {
                            stack[depth] = *left;
                            depth += 1;
                        }
                        (None, Some(_)) => {
                            stack[depth] = *right;
                            depth += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

fn build_recursive(
    tris: &[[Vector3<f64>; 3]],
    centroids: &[Vector3<f64>],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &order[start..end] {
        for c in &tris[i as usize] {
            bounds.grow(c);
        }
        cbounds.grow(&centroids[i as usize]);
    }
    let id = nodes.len() as u32;
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start: start as u32,
            count: count as u32,
        });
        return id;
    }
    let extent = cbounds.hi - cbounds.lo;
    let axis = extent.imax();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start: 0, count: 0 });
    let left = build_recursive(tris, centroids, order, start, mid, nodes);
    let right = build_recursive(tris, centroids, order, mid, end, nodes);
    let mut merged = *nodes[left as usize].bounds();
    merged.merge(nodes[right as usize].bounds());
    nodes[id as usize] = Node::Inner {
        bounds: merged,
        left,
        right,
    };
    id
}

/// Möller–Trumbore; returns (t, u, v) for any `t`, both faces.
pub fn intersect(tri: &[Vector3<f64>; 3], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, u, v))
}
