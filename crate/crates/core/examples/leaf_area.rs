//! Samples a curved, tilted leaf, meshes the samples by ball pivoting and
//! compares the mesh area with the exact surface area.

use fieldscan::eval::{completeness_report, leaf_area, median_spacing, reconstruct_surface_bpa};
use fieldscan::geometry::PointCloud;
use fieldscan::sim::LeafSpec;
use nalgebra::Vector3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let leaf = LeafSpec {
        center: Vector3::new(0.0, 0.0, 0.2),
        semi_axes: [0.05, 0.03],
        curvature: 5.0,
        yaw: 0.4,
        tilt: 0.3,
    };
    let step = 0.001;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let [a, b] = leaf.semi_axes;
    let (nx, ny) = ((a / step) as i64, (b / step) as i64);
    for i in -nx..=nx {
        for j in -ny..=ny {
            let (x, y) = (i as f64 * step, j as f64 * step);
            if (x / a).powi(2) + (y / b).powi(2) <= 1.0 {
                points.push(leaf.surface_point(x, y));
                normals.push(leaf.surface_normal(x, y));
            }
        }
    }
    let s = median_spacing(&points).ok_or("too few points")?;
    let cloud = PointCloud::from_points(points).with_normals(normals);
    let (mesh, stats) = reconstruct_surface_bpa(&cloud, &[2.0 * s, 4.0 * s])?;
    let exact = leaf.analytic_area() * 1e4;
    let report = completeness_report(exact, leaf_area(&mesh))?;
    println!("{} points, {} triangles, {} boundary edges", cloud.len(), stats.triangles, stats.boundary_edges);
    println!(
        "mesh {:.2} cm2, exact {:.2} cm2, difference {:+.2}% (the mesh stops at the outermost samples)",
        report.estimated_area, report.reference_area, report.percent_diff
    );
    Ok(())
}
