//! Measures a 1.5 mm lift between two noisy samplings of the same wavy
//! surface with M3C2 and prints the distance histogram.

use fieldscan::eval::{compute_m3c2, precision_stats, M3C2Params};
use fieldscan::geometry::PointCloud;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn surface(n: usize, seed: u64, lift: f64, noise: f64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let (x, y): (f64, f64) = (rng.random_range(0.0..0.1), rng.random_range(0.0..0.1));
            let z = 0.005 * (60.0 * x).sin() * (40.0 * y).cos() + lift + rng.random_range(-noise..noise);
            Vector3::new(x, y, z)
        })
        .collect();
    PointCloud::from_points(pts)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = surface(20_000, 1, 0.0, 1e-4);
    let compared = surface(20_000, 2, 0.0015, 3e-4);
    let params = M3C2Params {
        viewpoint: Some(Vector3::new(0.05, 0.05, 1.0)),
        core_point_subsample: 0.1,
        ..M3C2Params::default()
    };
    let out = compute_m3c2(&reference, &compared, &params)?;
    let stats = precision_stats(&out.values(), 81)?;
    println!(
        "{} core points: {} distances, {} sparse, {} empty",
        out.core_points,
        out.distances.len(),
        out.skipped_sparse,
        out.skipped_empty
    );
    println!("mean {:.3} mm, sigma {:.3} mm", stats.mean_m3c2 * 1e3, stats.sigma_m3c2 * 1e3);
    let peak = stats.histogram.counts.iter().copied().max().unwrap_or(1).max(1);
    for (k, c) in stats.histogram.counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        let bar = "#".repeat(c * 50 / peak);
        println!("{:>7.3} mm {bar}", stats.histogram.edges[k] * 1e3);
    }
    Ok(())
}
