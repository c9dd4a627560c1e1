//! Uniform hash grid over a point set for radius and nearest-neighbor queries.
//!
//! Query results are returned in ascending point-index order so downstream
//! floating-point accumulations do not depend on the grid layout.

use nalgebra::Vector3;
use rustc_hash::FxHashMap;

type Cell = (i64, i64, i64);

#[derive(Clone, Debug)]
pub struct PointGrid<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: FxHashMap<Cell, (u32, u32)>,
    order: Vec<u32>,
}

impl<'a> PointGrid<'a> {
    /// `cell` should be on the order of the typical query radius.
    pub fn build(points: &'a [Vector3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let key = |p: &Vector3<f64>| Self::key_of(p, cell);
        let mut keyed: Vec<(Cell, u32)> = points.iter().enumerate().map(|(i, p)| (key(p), i as u32)).collect();
        keyed.sort_unstable();
        let mut cells = FxHashMap::default();
        let mut order = Vec::with_capacity(keyed.len());
        let mut i = 0;
        while i < keyed.len() {
            let k = keyed[i].0;
            let start = i;
            while i < keyed.len() && keyed[i].0 == k {
                order.push(keyed[i].1);
                i += 1;
            }
            cells.insert(k, (start as u32, (i - start) as u32));
        }
        Self {
            points,
            cell,
            cells,
            order,
        }
    }

    fn key_of(p: &Vector3<f64>, cell: f64) -> Cell {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    pub fn points(&self) -> &'a [Vector3<f64>] {
        self.points
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn bucket(&self, k: &Cell) -> &[u32] {
        match self.cells.get(k) {
            Some(&(s, n)) => &self.order[s as usize..(s + n) as usize],
            None => &[],
        }
    }

    /// Indices of points with `|p - center| <= radius`, sorted ascending.
    pub fn within(&self, center: &Vector3<f64>, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        let r2 = radius * radius;
        let lo = Self::key_of(&center.add_scalar(-radius), self.cell);
        let hi = Self::key_of(&center.add_scalar(radius), self.cell);
        let span = ((hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) * (hi.2 - lo.2 + 1)) as usize;
        if span > 4 * self.cells.len() {
            // query box larger than the occupied grid: scan occupied cells
            for (&k, &(s, n)) in &self.cells {
                if k.0 < lo.0 || k.0 > hi.0 || k.1 < lo.1 || k.1 > hi.1 || k.2 < lo.2 || k.2 > hi.2 {
                    continue;
                }
                for &i in &self.order[s as usize..(s + n) as usize] {
                    if (self.points[i as usize] - center).norm_squared() <= r2 {
                        out.push(i);
                    }
                }
            }
        } else {
            for x in lo.0..=hi.0 {
                for y in lo.1..=hi.1 {
                    for z in lo.2..=hi.2 {
                        for &i in self.bucket(&(x, y, z)) {
                            if (self.points[i as usize] - center).norm_squared() <= r2 {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }

    /// Nearest point to `query` (ties broken by lower index), searching at most
    /// `max_dist` away. Returns `(index, squared distance)`.
    pub fn nearest(&self, query: &Vector3<f64>, max_dist: f64) -> Option<(u32, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = Self::key_of(query, self.cell);
        let max_ring = ((max_dist / self.cell).ceil() as i64).max(1) + 1;
        let mut best: Option<(u32, f64)> = None;
        for ring in 0..=max_ring {
            // every point in ring r is at least (r - 1) * cell away
            if let Some((_, d2)) = best {
                let bound = (ring - 1).max(0) as f64 * self.cell;
                if bound * bound > d2 {
                    break;
                }
            }
            self.visit_ring(c, ring, |i| {
                let d2 = (self.points[i as usize] - query).norm_squared();
                let better = match best {
                    None => true,
                    Some((bi, bd)) => d2 < bd || (d2 == bd && i < bi),
                };
                if better {
                    best = Some((i, d2));
                }
            });
        }
        best.filter(|&(_, d2)| d2 <= max_dist * max_dist)
    }

    /// `k` nearest neighbors sorted by (distance, index), within `max_dist`.
    pub fn knn(&self, query: &Vector3<f64>, k: usize, max_dist: f64) -> Vec<(u32, f64)> {
        let mut found: Vec<(u32, f64)> = Vec::new();
        if k == 0 {
            return found;
        }
        let c = Self::key_of(query, self.cell);
        let max_ring = ((max_dist / self.cell).ceil() as i64).max(1) + 1;
        for ring in 0..=max_ring {
            if found.len() >= k {
                let bound = (ring - 1).max(0) as f64 * self.cell;
                if bound * bound > found[k - 1].1 {
                    break;
                }
            }
            self.visit_ring(c, ring, |i| {
                found.push((i, (self.points[i as usize] - query).norm_squared()));
            });
            found.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            found.truncate(k);
        }
        found.retain(|&(_, d2)| d2 <= max_dist * max_dist);
        found.truncate(k);
        found
    }

    fn visit_ring(&self, c: Cell, ring: i64, mut f: impl FnMut(u32)) {
        for x in c.0 - ring..=c.0 + ring {
            for y in c.1 - ring..=c.1 + ring {
                for z in c.2 - ring..=c.2 + ring {
                    let on_shell = (x - c.0).abs() == ring || (y - c.1).abs() == ring || (z - c.2).abs() == ring;
                    if !on_shell {
                        continue;
                    }
                    for &i in self.bucket(&(x, y, z)) {
                        f(i);
                    }
                }
            }
        }
    }
}

/// Replaces the points falling in each cube of side `voxel` by their
/// centroid. Output is ordered by voxel coordinate.
pub fn voxel_downsample(points: &[Vector3<f64>], voxel: f64) -> Vec<Vector3<f64>> {
    assert!(voxel > 0.0 && voxel.is_finite(), "voxel size must be positive");
    let mut keyed: Vec<(Cell, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (PointGrid::key_of(p, voxel), i as u32))
        .collect();
    keyed.sort_unstable();
    keyed
        .chunk_by(|a, b| a.0 == b.0)
        .map(|run| run.iter().map(|&(_, i)| points[i as usize]).sum::<Vector3<f64>>() / run.len() as f64)
        .collect()
}
