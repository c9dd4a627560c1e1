#![allow(dead_code)]

use fieldscan::eval::{fit_plane, orient_toward, M3C2Distance, M3C2Output, M3C2Params};
use fieldscan::geometry::PointCloud;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn wavy_cloud(n: usize, seed: u64, lift: f64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::from_points(
        (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..0.05);
                let y: f64 = rng.random_range(0.0..0.05);
                let z = 0.004 * (80.0 * x).sin() + 0.003 * (60.0 * y).cos() + lift + rng.random_range(-3e-4..3e-4);
                Vector3::new(x, y, z)
            })
            .collect(),
    )
}

/// Exhaustive M3C2: every cylinder and neighborhood found by scanning all
/// points in index order.
pub fn m3c2_exhaustive(reference: &PointCloud, compared: &PointCloud, p: &M3C2Params) -> M3C2Output {
    let view = p.viewpoint.expect("oracle needs an explicit viewpoint");
    let n_cores = ((reference.len() as f64 * p.core_point_subsample).ceil() as usize).clamp(1, reference.len());
    let mut out = M3C2Output {
        core_points: n_cores,
        ..Default::default()
    };
    let r_normal = p.normal_scale / 2.0;
    for k in 0..n_cores {
        let ci = k * reference.len() / n_cores;
        let core = reference.points[ci];
        let hood: Vec<u32> = (0..reference.len() as u32)
            .filter(|&j| (reference.points[j as usize] - core).norm_squared() <= r_normal * r_normal)
            .collect();
        if hood.len() < p.min_neighbors {
            out.skipped_sparse += 1;
            continue;
        }
        let Some(fit) = fit_plane(&reference.points, &hood, &core) else {
            out.skipped_sparse += 1;
            continue;
        };
        let n = orient_toward(fit.normal, &core, &view);
        let inside = |cloud: &PointCloud| {
            let mut sum = Vector3::zeros();
            let mut count = 0usize;
            for q in &cloud.points {
                let v = q - core;
                let h = v.dot(&n);
                if h.abs() <= p.max_depth && (v - n * h).norm_squared() <= p.projection_radius * p.projection_radius {
                    sum += v;
                    count += 1;
                }
            }
            (sum, count)
        };
        let (cs, cc) = inside(compared);
        if cc == 0 {
            out.skipped_empty += 1;
            continue;
        }
        let (rs, rc) = inside(reference);
        out.distances.push(M3C2Distance {
            core_index: ci,
            core,
            normal: n,
            distance: (cs / cc as f64 - rs / rc as f64).dot(&n),
            reference_count: rc,
            compared_count: cc,
        });
    }
    out
}

pub fn params_with_view() -> M3C2Params {
    M3C2Params {
        viewpoint: Some(Vector3::new(0.025, 0.025, 10.0)),
        ..Default::default()
    }
}
