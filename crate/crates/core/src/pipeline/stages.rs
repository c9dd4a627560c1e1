use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineError};
use crate::eval::{
    completeness_report, compute_m3c2, format_table, leaf_area, median_spacing, precision_stats, reconstruct_surface_bpa,
    register_icp, IcpResult, LeafAreaReport, M3C2Output, PrecisionReport, TableRow,
};
use crate::exposure::{
    compute_histogram, exposure_step, step_budget, Action, GrayImage, SyntheticCamera, TraceRow,
};
use crate::geometry::{so3, PointCloud, Pose, PoseTrack, TriangleMesh};
use crate::georef::{build_point_cloud, calibrate_mounting, CalibrationReport, CloudReport, MountingCalibration, Plane, PlaneScan};
use crate::raycast::MeshBvh;
use crate::sim::{
    generate_trajectory, simulate_inertial_and_gnss, simulate_laser_profiles, synthesize_scene, InertialStreams, LaserProfile, Scene,
};
use crate::spatial::{voxel_downsample, PointGrid};
use crate::texture::{bake_texture, render_flat, CameraView, Intrinsics, RgbImage, TextureMap};
use crate::trajectory::{smooth_trajectory, SmootherSolution};

const SEED_INERTIAL: u64 = 1;
const SEED_LASER: u64 = 2;
const SEED_CALIBRATION: u64 = 3;
const SEED_REFERENCE: u64 = 4;

pub struct Simulation {
    pub scene: Scene,
    /// Ground-truth body poses.
    pub truth: PoseTrack,
    pub streams: InertialStreams,
    pub mounts: Vec<MountingCalibration>,
    /// One list per scanner, parallel to `mounts`.
    pub profiles: Vec<Vec<LaserProfile>>,
}

pub fn simulate(cfg: &PipelineConfig) -> Result<Simulation, PipelineError> {
    let scene = synthesize_scene(&cfg.scene)?;
    let model = generate_trajectory(&cfg.trajectory)?;
    let streams = simulate_inertial_and_gnss(&model, &cfg.sensors, cfg.stream_seed(SEED_INERTIAL))?;
    let bvh = MeshBvh::build(&scene.mesh);
    let mounts = true_mounts(cfg);
    let profiles = mounts
        .iter()
        .map(|m| simulate_laser_profiles(&bvh, model.track(), m, &cfg.scanner, cfg.stream_seed(SEED_LASER)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Simulation {
        scene,
        truth: model.track().clone(),
        streams,
        mounts,
        profiles,
    })
}

pub fn true_mounts(cfg: &PipelineConfig) -> Vec<MountingCalibration> {
    cfg.mounts.iter().enumerate().map(|(i, m)| m.calibration(i as u8)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub initial: Vec<MountingCalibration>,
    pub estimated: Vec<MountingCalibration>,
    pub reports: Vec<CalibrationReport>,
    /// Angle between estimated and true boresight per scanner, rad.
    pub boresight_error: Vec<f64>,
    /// Lever-arm error norm per scanner, m.
    pub lever_error: Vec<f64>,
}

fn plane_patch(plane: &Plane, half: f64) -> TriangleMesh {
    let n = plane.normal;
    let u = n
        .cross(&Vector3::x())
        .try_normalize(1e-9)
        .unwrap_or_else(|| n.cross(&Vector3::y()).normalize());
    let v = n.cross(&u);
    let c = n * plane.offset;
    let verts = vec![c - u * half - v * half, c + u * half - v * half, c + u * half + v * half, c - u * half + v * half];
    TriangleMesh::new(verts, vec![[0, 1, 2], [0, 2, 3]]).expect("four distinct corners")
}

/// Known body poses of the calibration drive: forward motion with a
/// constant yaw rate and a fixed pitch.
pub(super) fn calibration_track(cfg: &PipelineConfig) -> PoseTrack {
    let c = &cfg.calibration;
    let steps = ((c.duration * 20.0).ceil() as usize).max(2);
    let times: Vec<f64> = (0..=steps).map(|i| c.duration * i as f64 / steps as f64).collect();
    let start = cfg.trajectory.start;
    let poses = times
        .iter()
        .map(|&t| Pose::new(start + Vector3::new(c.speed * t, 0.0, 0.0), so3::from_yaw_pitch_roll(c.yaw_rate * t, c.pitch, 0.0)))
        .collect();
    PoseTrack::new(times, poses, "enu").expect("increasing times")
}

/// Simulates the plane scans of the calibration drive with the true
/// mounting and estimates every scanner's calibration from a perturbed
/// initial guess.
pub fn calibrate(cfg: &PipelineConfig) -> Result<CalibrationOutcome, PipelineError> {
    let track = calibration_track(cfg);
    let c = &cfg.calibration;
    let bvhs: Vec<(Plane, MeshBvh)> = c.planes.iter().map(|p| (*p, MeshBvh::build(&plane_patch(p, 20.0)))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream_seed(SEED_CALIBRATION));
    let mut out = CalibrationOutcome {
        initial: Vec::new(),
        estimated: Vec::new(),
        reports: Vec::new(),
        boresight_error: Vec::new(),
        lever_error: Vec::new(),
    };
    for truth in true_mounts(cfg) {
        let mut scans = Vec::with_capacity(bvhs.len());
        for (plane, bvh) in &bvhs {
            let profiles = simulate_laser_profiles(bvh, &track, &truth, &cfg.scanner, cfg.stream_seed(SEED_CALIBRATION))?;
            scans.push(PlaneScan { plane: *plane, profiles });
        }
        let dtheta = random_direction(&mut rng) * c.boresight_error_deg.to_radians();
        let dlever = random_direction(&mut rng) * c.lever_error;
        let init = truth.perturbed(&dtheta, &dlever);
        let (est, report) = calibrate_mounting(&scans, &track, &init)?;
        out.boresight_error.push(so3::angle_between(&est.boresight, &truth.boresight));
        out.lever_error.push((est.lever_arm - truth.lever_arm).norm());
        out.initial.push(init);
        out.estimated.push(est);
        out.reports.push(report);
    }
    Ok(out)
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Smooths the trajectory; a run that stops without meeting the
/// convergence test is a numerical failure.
pub fn solve(cfg: &PipelineConfig, streams: &InertialStreams) -> Result<SmootherSolution, PipelineError> {
    let sol = smooth_trajectory(&streams.imu, &streams.gnss, &streams.heading_pitch, &cfg.smoother)?;
    if !sol.report.converged {
        return Err(PipelineError::Numerical(format!(
            "trajectory smoother stopped after {} iterations without converging (cost {:.6e})",
            sol.report.iterations, sol.report.final_cost
        )));
    }
    Ok(sol)
}

pub fn georeference(
    profiles: &[Vec<LaserProfile>],
    track: &PoseTrack,
    mounts: &[MountingCalibration],
) -> Result<(PointCloud, CloudReport), PipelineError> {
    Ok(build_point_cloud(profiles, track, mounts)?)
}

/// Area-uniform random samples on every leaf of `scene`, about one per
/// `spacing²`, with the owning leaf index of each sample.
pub fn sample_leaf_surfaces(scene: &Scene, spacing: f64, seed: u64) -> (PointCloud, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (leaf, tris) in scene.leaf_triangles.iter().enumerate() {
        let mut cumulative = Vec::with_capacity(tris.len());
        let mut total = 0.0;
        for t in tris.clone() {
            total += scene.mesh.triangle_area(t);
            cumulative.push(total);
        }
        let n = (total / (spacing * spacing)).round() as usize;
        for _ in 0..n {
            let r = rng.random_range(0.0..total);
            let k = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            let [a, b, c] = scene.mesh.corners(tris.start + k);
            let (s, t): (f64, f64) = (rng.random(), rng.random());
            let s = s.sqrt();
            points.push(a * (1.0 - s) + b * (s * (1.0 - t)) + c * (s * t));
            labels.push(leaf as u32);
        }
    }
    (PointCloud::from_points(points), labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub count: usize,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafEvaluation {
    pub leaf: usize,
    pub compared_points: usize,
    pub m3c2: Option<DistanceSummary>,
    /// Area of the analytic leaf surface, cm².
    pub reference_area_cm2: f64,
    pub reconstructed_area_cm2: f64,
    pub area: Option<LeafAreaReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEvaluation {
    pub reference_points: usize,
    pub compared_points: usize,
    pub icp: Option<IcpResult>,
    pub precision: PrecisionReport,
    pub core_points: usize,
    pub skipped_sparse: usize,
    pub skipped_empty: usize,
    pub leaves: Vec<LeafEvaluation>,
    pub mean_abs_area_diff_pct: Option<f64>,
    pub table: String,
    #[serde(skip)]
    pub m3c2: M3C2Output,
    #[serde(skip)]
    pub leaf_mesh: TriangleMesh,
}

fn summarize(d: &[f64]) -> Option<DistanceSummary> {
    precision_stats(d, 1).ok().filter(|r| r.count >= 2).map(|r| DistanceSummary {
        count: r.count,
        mean: r.mean_m3c2,
        sigma: r.sigma_m3c2,
    })
}

/// Points of `cloud` within `dist` of a reference sample, with the label of
/// the nearest sample.
fn crop_to_reference(cloud: &PointCloud, reference: &PointCloud, labels: &[u32], dist: f64) -> (Vec<Vector3<f64>>, Vec<u32>) {
    let leaves = labels.iter().max().map_or(0, |m| *m as usize + 1);
    let mut boxes = vec![(Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)); leaves];
    for (p, &l) in reference.points.iter().zip(labels) {
        let b = &mut boxes[l as usize];
        b.0 = b.0.inf(p);
        b.1 = b.1.sup(p);
    }
    let pad = Vector3::repeat(dist);
    let boxes: Vec<_> = boxes.into_iter().map(|(lo, hi)| (lo - pad, hi + pad)).collect();
    let grid = PointGrid::build(&reference.points, dist);
    let kept: Vec<(Vector3<f64>, u32)> = cloud
        .points
        .par_iter()
        .filter_map(|p| {
            let inside = boxes.iter().any(|(lo, hi)| (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]));
            if !inside {
                return None;
            }
            grid.nearest(p, dist).map(|(j, _)| (*p, labels[j as usize]))
        })
        .collect();
    kept.into_iter().unzip()
}

/// Compares a reconstructed cloud with the true leaf surfaces of `scene`:
/// leaf points are cropped, optionally aligned by ICP, measured with M3C2
/// and meshed per leaf by ball pivoting.
pub fn evaluate_scene(cfg: &PipelineConfig, scene: &Scene, cloud: &PointCloud) -> Result<SceneEvaluation, PipelineError> {
    let e = &cfg.evaluation;
    let (reference, ref_labels) = sample_leaf_surfaces(scene, e.reference_spacing, cfg.stream_seed(SEED_REFERENCE));
    if reference.is_empty() {
        return Err(PipelineError::Validation("scene has no leaves to evaluate".into()));
    }
    let (points, labels) = crop_to_reference(cloud, &reference, &ref_labels, e.crop_distance);
    log::info!("{} of {} points lie on leaves", points.len(), cloud.len());
    let mut compared = PointCloud::from_points(points);

    let icp = if e.icp_align {
        let source = PointCloud::from_points(voxel_downsample(&compared.points, e.icp_voxel));
        let result = register_icp(&source, &reference, &Pose::identity(), &e.icp)?;
        compared = compared.transformed(&result.pose);
        Some(result)
    } else {
        None
    };

    let m3c2 = compute_m3c2(&reference, &compared, &e.m3c2)?;
    let precision = precision_stats(&m3c2.values(), e.histogram_bins)?;

    let leaf_count = scene.leaves.len();
    let mut per_leaf: Vec<Vec<f64>> = vec![Vec::new(); leaf_count];
    for d in &m3c2.distances {
        per_leaf[ref_labels[d.core_index] as usize].push(d.distance);
    }
    let mut leaf_points: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); leaf_count];
    for (p, &l) in compared.points.iter().zip(&labels) {
        leaf_points[l as usize].push(*p);
    }

    let meshes: Vec<Result<TriangleMesh, PipelineError>> = leaf_points
        .par_iter()
        .map(|pts| {
            let thinned = voxel_downsample(pts, e.bpa_voxel);
            let Some(s) = median_spacing(&thinned).filter(|_| thinned.len() >= 3) else {
                return Ok(TriangleMesh::default());
            };
            let radii: Vec<f64> = e.bpa_radius_factors.iter().map(|f| f * s).collect();
            Ok(reconstruct_surface_bpa(&PointCloud::from_points(thinned), &radii)?.0)
        })
        .collect();

    let mut leaves = Vec::with_capacity(leaf_count);
    let mut rows = Vec::with_capacity(leaf_count + 1);
    let mut leaf_mesh = TriangleMesh::default();
    for (k, mesh) in meshes.into_iter().enumerate() {
        let mesh = mesh?;
        let reference_area_cm2 = scene.leaves[k].analytic_area() * 1e4;
        let reconstructed_area_cm2 = leaf_area(&mesh);
        let area = completeness_report(reference_area_cm2, reconstructed_area_cm2).ok();
        let m = summarize(&per_leaf[k]);
        rows.push(TableRow {
            label: format!("{}", k + 1),
            sigma_mm: vec![m.map(|m| m.sigma * 1e3)],
            area_diff_pct: vec![area.map(|a| a.percent_diff)],
            reference_cm2: Some(reference_area_cm2),
        });
        leaves.push(LeafEvaluation {
            leaf: k,
            compared_points: leaf_points[k].len(),
            m3c2: m,
            reference_area_cm2,
            reconstructed_area_cm2,
            area,
        });
        leaf_mesh.append(&mesh);
    }
    let mean_row = TableRow::mean_of(&rows, 1);
    let mean_abs_area_diff_pct = mean_row.area_diff_pct[0];
    rows.push(mean_row);

    Ok(SceneEvaluation {
        reference_points: reference.len(),
        compared_points: compared.len(),
        icp,
        precision,
        core_points: m3c2.core_points,
        skipped_sparse: m3c2.skipped_sparse,
        skipped_empty: m3c2.skipped_empty,
        leaves,
        mean_abs_area_diff_pct,
        table: format_table(&["scan"], &rows),
        m3c2,
        leaf_mesh,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudComparison {
    pub icp: Option<IcpResult>,
    pub precision: PrecisionReport,
    pub core_points: usize,
    pub skipped_sparse: usize,
    pub skipped_empty: usize,
    #[serde(skip)]
    pub m3c2: M3C2Output,
}

/// M3C2 between two arbitrary clouds, after optional ICP of `compared` onto
/// `reference`.
pub fn evaluate_clouds(cfg: &PipelineConfig, reference: &PointCloud, compared: &PointCloud) -> Result<CloudComparison, PipelineError> {
    let e = &cfg.evaluation;
    let mut compared = compared.clone();
    let icp = if e.icp_align {
        let source = PointCloud::from_points(voxel_downsample(&compared.points, e.icp_voxel));
        let result = register_icp(&source, reference, &Pose::identity(), &e.icp)?;
        compared = compared.transformed(&result.pose);
        Some(result)
    } else {
        None
    };
    let m3c2 = compute_m3c2(reference, &compared, &e.m3c2)?;
    let precision = precision_stats(&m3c2.values(), e.histogram_bins)?;
    Ok(CloudComparison {
        icp,
        precision,
        core_points: m3c2.core_points,
        skipped_sparse: m3c2.skipped_sparse,
        skipped_empty: m3c2.skipped_empty,
        m3c2,
    })
}

/// Flat per-triangle colors: a brown checkerboard on the ground, one shade
/// of green per leaf darkened on steep facets.
pub fn scene_colors(scene: &Scene) -> Vec<[u8; 3]> {
    let mesh = &scene.mesh;
    (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            let centroid = (a + b + c) / 3.0;
            match scene.leaf_of_triangle(t) {
                Some(leaf) => {
                    let shade = 0.55 + 0.45 * mesh.triangle_normal(t).z.abs();
                    let base = [40.0 + 12.0 * (leaf % 5) as f64, 150.0 + 9.0 * (leaf % 7) as f64, 45.0];
                    base.map(|v| (v * shade).round() as u8)
                }
                None => {
                    let parity = ((centroid.x / 0.1).floor() + (centroid.y / 0.1).floor()) as i64 & 1;
                    if parity == 0 {
                        [120, 92, 60]
                    } else {
                        [96, 72, 48]
                    }
                }
            }
        })
        .collect()
}

const SKY: [u8; 3] = [150, 180, 225];

/// Two rows of cameras, one on each side of the track, looking down at the
/// plant row; images are rendered from the true scene.
pub fn camera_rig(cfg: &PipelineConfig, scene: &Scene, bvh: &MeshBvh) -> Vec<CameraView> {
    let t = &cfg.texture;
    let colors = scene_colors(scene);
    let [x0, x1, ..] = cfg.scene.ground_extent;
    let k = Intrinsics::centered(t.image_width, t.image_height, t.focal);
    let n = t.cameras_per_side;
    let mut views = Vec::with_capacity(2 * n);
    for side in [1.0, -1.0] {
        for i in 0..n {
            let x = x0 + (x1 - x0) * (i as f64 + 0.5) / n as f64;
            let eye = Vector3::new(x, side * t.camera_offset, scene.ground_height + t.camera_height);
            let target = Vector3::new(x, 0.0, scene.ground_height + 0.1);
            let mut view = CameraView::look_at(eye, target, Vector3::z(), k, RgbImage::filled(1, 1, SKY));
            view.image = render_flat(&scene.mesh, bvh, &colors, &view.pose, &k, SKY);
            views.push(view);
        }
    }
    views
}

pub fn bake_scene(cfg: &PipelineConfig, mesh: &TriangleMesh, views: &[CameraView]) -> Result<TextureMap, PipelineError> {
    let r = cfg.texture.resolution;
    Ok(bake_texture(mesh, views, r, r, &cfg.texture.bake)?)
}

fn luminance(img: &RgbImage) -> Vec<f64> {
    img.data
        .chunks_exact(3)
        .map(|p| ((0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0).max(0.01))
        .collect()
}

/// Runs the exposure controller on a linear camera whose scene reflectances
/// are the luminances of `image`, until it settles or saturates.
pub fn autoexpose_scene(cfg: &PipelineConfig, image: &RgbImage) -> Result<Vec<TraceRow>, PipelineError> {
    let x = &cfg.exposure;
    x.initial.validate()?;
    let camera = SyntheticCamera {
        reflectances: luminance(image),
        gain: x.scene_gain,
    };
    let budget = step_budget(&x.initial.limits, &x.controller);
    let mut state = x.initial;
    let mut trace = Vec::new();
    for step in 0..=budget {
        let captured: GrayImage = camera.capture(&state);
        let hist = compute_histogram(&[captured])?;
        let (next, action) = exposure_step(&hist, &state, &x.controller);
        state = next;
        trace.push(TraceRow {
            step,
            iso: state.iso,
            f_stop: state.f_stop,
            shutter_ms: state.shutter_ms,
            action: action.name().into(),
        });
        if matches!(action, Action::NoChange | Action::Saturated) {
            break;
        }
    }
    Ok(trace)
}
