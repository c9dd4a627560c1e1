//! Ball-pivoting surface reconstruction.
//!
//! A ball of radius `rho` is rolled over the oriented point set. Each front
//! edge `a -> b` belongs to a committed triangle `(a, b, opp)` whose
//! counter-clockwise normal agrees with the point normals; the ball resting
//! on that triangle is pivoted about the edge until it touches another point.
//! Edges that cannot be pivoted become boundary edges and are retried with
//! the next (larger) radius.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::normals::estimate_normals;
use super::EvalError;
use crate::geometry::{bounding_box, PointCloud, TriangleMesh, DEGENERATE_AREA};
use crate::spatial::PointGrid;

const TWO_PI: f64 = std::f64::consts::TAU;
/// Pivot angles this close to a full turn are treated as zero (co-circular
/// neighbors rounded to the wrong side).
const ANGLE_WRAP: f64 = 1e-7;
/// Points closer than `rho * (1 - EMPTY_TOL)` to a ball center are inside it.
const EMPTY_TOL: f64 = 1e-7;
/// Neighbors considered per seed vertex.
const SEED_NEIGHBORS: usize = 24;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BpaStats {
    pub radii: Vec<f64>,
    pub triangles: usize,
    pub seeds: usize,
    pub boundary_edges: usize,
    pub normals_estimated: bool,
}

/// Median distance from each point to its nearest other point.
pub fn median_spacing(points: &[Vector3<f64>]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let (lo, hi) = bounding_box(points)?;
    let diag = (hi - lo).norm();
    if diag == 0.0 {
        return None;
    }
    let grid = PointGrid::build(points, diag / (points.len() as f64).sqrt());
    let mut d: Vec<f64> = points
        .iter()
        .filter_map(|p| grid.knn(p, 2, diag).get(1).map(|&(_, d2)| d2.sqrt()))
        .collect();
    if d.is_empty() {
        return None;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    Some(*m)
}

#[derive(Clone, Copy, Debug)]
struct FrontEdge {
    opp: u32,
    boundary: bool,
}

struct Pivoter<'a> {
    pts: &'a [Vector3<f64>],
    nrm: &'a [Vector3<f64>],
    used: Vec<bool>,
    /// Faces per undirected edge.
    faces: FxHashMap<(u32, u32), u8>,
    front: FxHashMap<(u32, u32), FrontEdge>,
    /// Front edges incident to each vertex.
    front_degree: Vec<u32>,
    queue: VecDeque<(u32, u32)>,
    triangles: Vec<[u32; 3]>,
    seeds: usize,
    buf: Vec<u32>,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<'a> Pivoter<'a> {
    fn new(pts: &'a [Vector3<f64>], nrm: &'a [Vector3<f64>]) -> Self {
        Self {
            pts,
            nrm,
            used: vec![false; pts.len()],
            faces: FxHashMap::default(),
            front: FxHashMap::default(),
            front_degree: vec![0; pts.len()],
            queue: VecDeque::new(),
            triangles: Vec::new(),
            seeds: 0,
            buf: Vec::new(),
        }
    }

    /// Center of the ball of radius `rho` touching `a, b, c` on the side of
    /// their counter-clockwise normal, provided that normal agrees with the
    /// vertex normals.
    fn ball_center(&self, a: u32, b: u32, c: u32, rho: f64) -> Option<Vector3<f64>> {
        let (pa, pb, pc) = (self.pts[a as usize], self.pts[b as usize], self.pts[c as usize]);
        let ab = pb - pa;
        let ac = pc - pa;
        let n = ab.cross(&ac);
        let n2 = n.norm_squared();
        if n2 <= (2.0 * DEGENERATE_AREA).powi(2) {
            return None;
        }
        let vertex_normals = self.nrm[a as usize] + self.nrm[b as usize] + self.nrm[c as usize];
        if n.dot(&vertex_normals) <= 0.0 {
            return None;
        }
        let offset = (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / (2.0 * n2);
        let r2 = offset.norm_squared();
        if r2 > rho * rho {
            return None;
        }
        Some(pa + offset + n / n2.sqrt() * (rho * rho - r2).sqrt())
    }

    fn ball_is_empty(&mut self, grid: &PointGrid, center: &Vector3<f64>, rho: f64, touching: [u32; 3]) -> bool {
        grid.within(center, rho * (1.0 - EMPTY_TOL), &mut self.buf);
        self.buf.iter().all(|i| touching.contains(i))
    }

    fn add_front(&mut self, a: u32, b: u32, opp: u32) {
        self.front.insert((a, b), FrontEdge { opp, boundary: false });
        self.front_degree[a as usize] += 1;
        self.front_degree[b as usize] += 1;
        self.queue.push_back((a, b));
    }

    fn remove_front(&mut self, a: u32, b: u32) {
        if self.front.remove(&(a, b)).is_some() {
            self.front_degree[a as usize] -= 1;
            self.front_degree[b as usize] -= 1;
        }
    }

    /// Commits triangle `(a, b, c)`; each directed edge either closes the
    /// opposite front edge or opens a new one.
    fn commit(&mut self, tri: [u32; 3]) {
        self.triangles.push(tri);
        for k in 0..3 {
            let (s, t, o) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            self.used[s as usize] = true;
            *self.faces.entry(key(s, t)).or_insert(0) += 1;
            if self.front.contains_key(&(t, s)) {
                self.remove_front(t, s);
            } else {
                self.add_front(s, t, o);
            }
        }
    }

    /// True if directed edge `s -> t` can be added without exceeding two
    /// faces per edge or reusing an edge with a clashing orientation.
    fn edge_ok(&self, s: u32, t: u32) -> bool {
        match self.faces.get(&key(s, t)).copied().unwrap_or(0) {
            0 => true,
            1 => self.front.contains_key(&(t, s)),
            _ => false,
        }
    }

    fn try_seed(&mut self, grid: &PointGrid, i: u32, rho: f64) -> bool {
        let p = self.pts[i as usize];
        grid.within(&p, 2.0 * rho, &mut self.buf);
        let mut nb: Vec<(f64, u32)> = self
            .buf
            .iter()
            .filter(|&&j| j != i && !self.used[j as usize])
            .map(|&j| ((self.pts[j as usize] - p).norm_squared(), j))
            .collect();
        nb.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        nb.truncate(SEED_NEIGHBORS);
        for x in 0..nb.len() {
            for y in x + 1..nb.len() {
                let (j, k) = (nb[x].1, nb[y].1);
                for tri in [[i, j, k], [i, k, j]] {
                    if let Some(c) = self.ball_center(tri[0], tri[1], tri[2], rho) {
                        if self.ball_is_empty(grid, &c, rho, tri) {
                            self.commit(tri);
                            self.seeds += 1;
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Pivots the ball about front edge `a -> b`; returns the new vertex.
    fn pivot(&mut self, grid: &PointGrid, a: u32, b: u32, opp: u32, rho: f64) -> Option<u32> {
        let center = self.ball_center(a, b, opp, rho)?;
        let (pa, pb) = (self.pts[a as usize], self.pts[b as usize]);
        let m = (pa + pb) / 2.0;
        let e = (pb - pa).normalize();
        let u = center - m;
        grid.within(&m, u.norm() + rho, &mut self.buf);
        let cands = std::mem::take(&mut self.buf);
        let mut ranked: Vec<(f64, u32, Vector3<f64>)> = Vec::new();
        for &x in &cands {
            if x == a || x == b || x == opp {
                continue;
            }
            let Some(cx) = self.ball_center(b, a, x, rho) else {
                continue;
            };
            let v = cx - m;
            let mut theta = e.dot(&u.cross(&v)).atan2(u.dot(&v));
            if theta < 0.0 {
                theta += TWO_PI;
            }
            if theta > TWO_PI - ANGLE_WRAP {
                theta -= TWO_PI;
            }
            ranked.push((theta, x, cx));
        }
        self.buf = cands;
        ranked.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        for (_, x, cx) in ranked {
            if self.ball_is_empty(grid, &cx, rho, [a, b, x]) {
                return Some(x);
            }
        }
        None
    }

    fn run_radius(&mut self, rho: f64) {
        let grid = PointGrid::build(self.pts, 2.0 * rho);
        // retry every boundary edge left by smaller balls
        let mut retry: Vec<(u32, u32)> = self.front.keys().copied().collect();
        retry.sort_unstable();
        for k in retry {
            if let Some(f) = self.front.get_mut(&k) {
                f.boundary = false;
            }
            self.queue.push_back(k);
        }
        let mut cursor = 0usize;
        loop {
            while let Some((a, b)) = self.queue.pop_front() {
                let Some(edge) = self.front.get(&(a, b)).copied() else {
                    continue;
                };
                if edge.boundary {
                    continue;
                }
                let accepted = self.pivot(&grid, a, b, edge.opp, rho).filter(|&x| {
                    (!self.used[x as usize] || self.front_degree[x as usize] > 0)
                        && self.edge_ok(a, x)
                        && self.edge_ok(x, b)
                });
                match accepted {
                    Some(x) => self.commit([b, a, x]),
                    None => {
                        if let Some(f) = self.front.get_mut(&(a, b)) {
                            f.boundary = true;
                        }
                    }
                }
            }
            while cursor < self.pts.len() && self.used[cursor] {
                cursor += 1;
            }
            if cursor == self.pts.len() {
                break;
            }
            let i = cursor as u32;
            cursor += 1;
            self.try_seed(&grid, i, rho);
        }
    }
}

/// Reconstructs a mesh over `cloud` with balls of the given ascending radii.
/// Missing normals are estimated and oriented upward. The output keeps every
/// input point as a vertex, in input order.
pub fn reconstruct_surface_bpa(cloud: &PointCloud, radii: &[f64]) -> Result<(TriangleMesh, BpaStats), EvalError> {
    if cloud.is_empty() {
        return Err(EvalError::EmptyInput("cloud"));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::InvalidParams(format!("radii must be positive and ascending: {radii:?}")));
    }
    let mut stats = BpaStats {
        radii: radii.to_vec(),
        ..Default::default()
    };
    let oriented;
    let cloud = if cloud.has_normals() {
        cloud
    } else {
        let spacing = median_spacing(&cloud.points).ok_or(EvalError::NoNormals(cloud.len()))?;
        let (lo, hi) = bounding_box(&cloud.points).expect("nonempty");
        let view = Vector3::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, hi.z + 1000.0);
        oriented = estimate_normals(cloud, 3.0 * spacing, &view)?;
        stats.normals_estimated = true;
        &oriented
    };
    let normals = cloud.normals.as_deref().expect("normals present");
    let mut piv = Pivoter::new(&cloud.points, normals);
    for &rho in radii {
        piv.run_radius(rho);
    }
    stats.triangles = piv.triangles.len();
    stats.seeds = piv.seeds;
    stats.boundary_edges = piv.front.len();
    let mesh = TriangleMesh::new(cloud.points.clone(), piv.triangles).map_err(|e| EvalError::InvalidParams(e.to_string()))?;
    Ok((mesh, stats))
}
