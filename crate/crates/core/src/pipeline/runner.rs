use std::path::{Path, PathBuf};
use std::time::Instant;

use super::stages::{self, Simulation};
use super::{PipelineConfig, PipelineError, RunManifest};
use crate::exposure::{read_histogram_csv, replay, write_trace_csv, TraceRow};
use crate::geometry::{PointCloud, PoseTrack};
use crate::georef::MountingCalibration;
use crate::io::csvio::{self, DistanceRow};
use crate::io::ply::{self, PlyFormat};
use crate::io::{profiles as profile_io, read_json, write_json};
use crate::raycast::MeshBvh;
use crate::sim::{synthesize_scene, InertialStreams, LaserProfile};
use crate::texture::{load_cameras, save_cameras, write_count_pgm, write_png, CameraView};

pub const SCENE_MESH: &str = "scene.ply";
pub const SCENE_LEAVES: &str = "scene_leaves.json";
pub const TRUTH_TRACK: &str = "truth_track.csv";
pub const IMU: &str = "imu.csv";
pub const GNSS: &str = "gnss.csv";
pub const HEADING_PITCH: &str = "heading_pitch.csv";
pub const MOUNTS_TRUE: &str = "mounting_truth.json";
pub const MOUNTS: &str = "mounting.json";
pub const CALIBRATION: &str = "calibration.json";
pub const TRACK: &str = "track.csv";
pub const SMOOTHER: &str = "smoother.json";
pub const CLOUD: &str = "cloud.ply";
pub const CLOUD_REPORT: &str = "cloud.json";
pub const EVALUATION: &str = "evaluation.json";
pub const DISTANCES: &str = "m3c2_distances.csv";
pub const LEAF_TABLE: &str = "leaf_table.txt";
pub const LEAF_MESHES: &str = "leaf_meshes.ply";
pub const CAMERAS: &str = "cameras.json";
pub const TEXTURE: &str = "texture.png";
pub const TEXTURE_VIEWS: &str = "texture_views.pgm";
pub const EXPOSURE_TRACE: &str = "exposure_trace.csv";

fn profiles_file(scanner: usize) -> String {
    format!("profiles_{scanner}.bin")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Calibrate,
    Solve,
    Georef,
    Evaluate,
    Bake,
    Autoexpose,
    E2e,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Solve => "solve",
            Command::Georef => "georef",
            Command::Evaluate => "evaluate",
            Command::Bake => "bake",
            Command::Autoexpose => "autoexpose",
            Command::E2e => "e2e",
        }
    }
}

/// File locations for a command. Inputs default to files written by earlier
/// commands into `input` (or `out` when `input` is unset).
#[derive(Clone, Debug, Default)]
pub struct CommandArgs {
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    /// `evaluate`: reference and compared clouds instead of the simulated scene.
    pub reference: Option<PathBuf>,
    pub compared: Option<PathBuf>,
    /// `autoexpose`: replay these histograms instead of simulating captures.
    pub histograms: Option<PathBuf>,
    /// `bake`: textured mesh and camera list instead of the simulated rig.
    pub mesh: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
}

impl CommandArgs {
    fn input_dir(&self) -> &Path {
        self.input.as_deref().unwrap_or(&self.out)
    }

    fn input(&self, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.input_dir().join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::Validation(format!("missing input {}", p.display())))
        }
    }
}

struct Timer(Instant, &'static str);

impl Timer {
    fn start(label: &'static str) -> Self {
        log::info!("{label}: started");
        Timer(Instant::now(), label)
    }
}

impl Drop for Timer {
    fn drop(&mut self) {
        log::info!("{}: {:.2} s", self.1, self.0.elapsed().as_secs_f64());
    }
}

/// Runs one command, writes its artifacts and `manifest.<command>.json`
/// under `args.out`, and returns the manifest.
pub fn run_command(cmd: Command, cfg: &PipelineConfig, args: &CommandArgs) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&args.out).map_err(|e| PipelineError::Validation(format!("{}: {e}", args.out.display())))?;
    let mut m = RunManifest::new(cmd.name(), cfg);
    let out = args.out.as_path();
    match cmd {
        Command::Simulate => {
            let sim = {
                let _t = Timer::start("simulate");
                stages::simulate(cfg)?
            };
            write_simulation(&sim, out, &mut m)?;
        }
        Command::Calibrate => {
            write_calibration(cfg, out, &mut m)?;
        }
        Command::Solve => {
            let streams = InertialStreams {
                imu: csvio::read_imu(args.input(IMU)?)?,
                gnss: csvio::read_gnss(args.input(GNSS)?)?,
                heading_pitch: csvio::read_heading_pitch(args.input(HEADING_PITCH)?)?,
            };
            let truth = match args.input(TRUTH_TRACK) {
                Ok(p) => Some(csvio::read_track(p, "enu")?),
                Err(_) => None,
            };
            write_solution(cfg, &streams, truth.as_ref(), out, &mut m)?;
        }
        Command::Georef => {
            let profiles = (0..cfg.mounts.len())
                .map(|i| Ok(profile_io::read_profiles(args.input(&profiles_file(i))?)?))
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let track = csvio::read_track(args.input(TRACK)?, "enu")?;
            let mounts: Vec<MountingCalibration> = read_json(args.input(MOUNTS)?)?;
            write_cloud(&profiles, &track, &mounts, out, &mut m)?;
        }
        Command::Evaluate => match (&args.reference, &args.compared) {
            (Some(r), Some(c)) => {
                let reference = ply::read_point_cloud(r)?;
                let compared = ply::read_point_cloud(c)?;
                m.add_input(r)?;
                m.add_input(c)?;
                let cmp = {
                    let _t = Timer::start("evaluate");
                    stages::evaluate_clouds(cfg, &reference, &compared)?
                };
                write_json(out.join(EVALUATION), &cmp)?;
                write_distances(out, &cmp.m3c2)?;
                m.metric("sigma_m3c2_m", cmp.precision.sigma_m3c2);
                m.metric("mean_m3c2_m", cmp.precision.mean_m3c2);
                m.metric("m3c2_count", cmp.precision.count);
                m.add_artifact(out, EVALUATION)?;
                m.add_artifact(out, DISTANCES)?;
            }
            (None, None) => {
                let cloud = ply::read_point_cloud(args.input(CLOUD)?)?;
                write_evaluation(cfg, &cloud, out, &mut m)?;
            }
            _ => return Err(PipelineError::Validation("--ref and --cmp must be given together".into())),
        },
        Command::Bake => {
            let (mesh, views, synthetic) = match (&args.mesh, &args.cameras) {
                (Some(mp), Some(cp)) => {
                    m.add_input(mp)?;
                    m.add_input(cp)?;
                    (ply::read_mesh(mp)?, load_cameras(cp)?, false)
                }
                (None, None) => {
                    let scene = synthesize_scene(&cfg.scene)?;
                    let bvh = MeshBvh::build(&scene.mesh);
                    let views = stages::camera_rig(cfg, &scene, &bvh);
                    (scene.mesh, views, true)
                }
                _ => return Err(PipelineError::Validation("--mesh and --cameras must be given together".into())),
            };
            write_bake(cfg, &mesh, &views, synthetic, out, &mut m)?;
        }
        Command::Autoexpose => {
            let trace = match &args.histograms {
                Some(h) => {
                    m.add_input(h)?;
                    replay(&read_histogram_csv(h)?, &cfg.exposure.initial, &cfg.exposure.controller)
                }
                None => {
                    let scene = synthesize_scene(&cfg.scene)?;
                    let bvh = MeshBvh::build(&scene.mesh);
                    let views = stages::camera_rig(cfg, &scene, &bvh);
                    stages::autoexpose_scene(cfg, &views[0].image)?
                }
            };
            write_trace(&trace, out, &mut m)?;
        }
        Command::E2e => run_e2e(cfg, out, &mut m)?,
    }
    m.write(out)?;
    Ok(m)
}

fn run_e2e(cfg: &PipelineConfig, out: &Path, m: &mut RunManifest) -> Result<(), PipelineError> {
    let sim = {
        let _t = Timer::start("simulate");
        stages::simulate(cfg)?
    };
    write_simulation(&sim, out, m)?;
    let mounts = write_calibration(cfg, out, m)?;
    let track = write_solution(cfg, &sim.streams, Some(&sim.truth), out, m)?;
    let Simulation { scene, profiles, .. } = sim;
    let cloud = write_cloud(&profiles, &track, &mounts, out, m)?;
    drop(profiles);
    write_evaluation(cfg, &cloud, out, m)?;
    drop(cloud);
    let bvh = MeshBvh::build(&scene.mesh);
    let views = {
        let _t = Timer::start("render views");
        stages::camera_rig(cfg, &scene, &bvh)
    };
    write_bake(cfg, &scene.mesh, &views, true, out, m)?;
    let trace = stages::autoexpose_scene(cfg, &views[0].image)?;
    write_trace(&trace, out, m)?;
    Ok(())
}

fn write_simulation(sim: &Simulation, out: &Path, m: &mut RunManifest) -> Result<(), PipelineError> {
    let _t = Timer::start("write simulation");
    ply::write_mesh(out.join(SCENE_MESH), &sim.scene.mesh, PlyFormat::BinaryLittleEndian)?;
    write_json(out.join(SCENE_LEAVES), &sim.scene.leaves)?;
    csvio::write_track(out.join(TRUTH_TRACK), &sim.truth)?;
    csvio::write_imu(out.join(IMU), &sim.streams.imu)?;
    csvio::write_gnss(out.join(GNSS), &sim.streams.gnss)?;
    csvio::write_heading_pitch(out.join(HEADING_PITCH), &sim.streams.heading_pitch)?;
    write_json(out.join(MOUNTS_TRUE), &sim.mounts)?;
    for name in [SCENE_MESH, SCENE_LEAVES, TRUTH_TRACK, IMU, GNSS, HEADING_PITCH, MOUNTS_TRUE] {
        m.add_artifact(out, name)?;
    }
    for (i, p) in sim.profiles.iter().enumerate() {
        let name = profiles_file(i);
        profile_io::write_profiles(out.join(&name), p)?;
        m.add_artifact(out, &name)?;
    }
    let valid: usize = sim.profiles.iter().flatten().map(LaserProfile::valid_count).sum();
    m.metric("profiles", sim.profiles.iter().map(Vec::len).sum::<usize>());
    m.metric("valid_samples", valid);
    m.metric("leaves", sim.scene.leaves.len());
    m.metric("scene_triangles", sim.scene.mesh.triangles.len());
    Ok(())
}

fn write_calibration(cfg: &PipelineConfig, out: &Path, m: &mut RunManifest) -> Result<Vec<MountingCalibration>, PipelineError> {
    let outcome = {
        let _t = Timer::start("calibrate");
        stages::calibrate(cfg)?
    };
    write_json(out.join(MOUNTS), &outcome.estimated)?;
    write_json(out.join(CALIBRATION), &outcome)?;
    m.add_artifact(out, MOUNTS)?;
    m.add_artifact(out, CALIBRATION)?;
    m.metric("calibration_boresight_error_rad", &outcome.boresight_error);
    m.metric("calibration_lever_error_m", &outcome.lever_error);
    Ok(outcome.estimated)
}

fn write_solution(
    cfg: &PipelineConfig,
    streams: &InertialStreams,
    truth: Option<&PoseTrack>,
    out: &Path,
    m: &mut RunManifest,
) -> Result<PoseTrack, PipelineError> {
    let sol = {
        let _t = Timer::start("solve");
        stages::solve(cfg, streams)?
    };
    csvio::write_track(out.join(TRACK), &sol.track)?;
    write_json(out.join(SMOOTHER), &sol.report)?;
    m.add_artifact(out, TRACK)?;
    m.add_artifact(out, SMOOTHER)?;
    m.metric("smoother_iterations", sol.report.iterations);
    m.metric("smoother_final_cost", sol.report.final_cost);
    if let Some(truth) = truth {
        let errs: Vec<f64> = sol
            .track
            .entries()
            .filter_map(|(t, p)| truth.interpolate(t).ok().map(|q| (p.position - q.position).norm_squared()))
            .collect();
        if !errs.is_empty() {
            let rmse = (errs.iter().sum::<f64>() / errs.len() as f64).sqrt();
            log::info!("trajectory position rmse {:.4} m", rmse);
            m.metric("trajectory_position_rmse_m", rmse);
        }
    }
    Ok(sol.track)
}

fn write_cloud(
    profiles: &[Vec<LaserProfile>],
    track: &PoseTrack,
    mounts: &[MountingCalibration],
    out: &Path,
    m: &mut RunManifest,
) -> Result<PointCloud, PipelineError> {
    let (cloud, report) = {
        let _t = Timer::start("georef");
        stages::georeference(profiles, track, mounts)?
    };
    {
        let _t = Timer::start("write cloud");
        ply::write_point_cloud(out.join(CLOUD), &cloud, PlyFormat::BinaryLittleEndian)?;
    }
    write_json(out.join(CLOUD_REPORT), &report)?;
    m.add_artifact(out, CLOUD)?;
    m.add_artifact(out, CLOUD_REPORT)?;
    m.metric("cloud_points", report.points);
    m.metric("profiles_skipped", report.profiles_skipped);
    Ok(cloud)
}

fn write_distances(out: &Path, m3c2: &crate::eval::M3C2Output) -> Result<(), PipelineError> {
    let rows: Vec<DistanceRow> = m3c2
        .distances
        .iter()
        .map(|d| DistanceRow {
            core_x: d.core.x,
            core_y: d.core.y,
            core_z: d.core.z,
            dist_m: d.distance,
        })
        .collect();
    csvio::write_distances(out.join(DISTANCES), &rows)?;
    Ok(())
}

fn write_evaluation(cfg: &PipelineConfig, cloud: &PointCloud, out: &Path, m: &mut RunManifest) -> Result<(), PipelineError> {
    let scene = synthesize_scene(&cfg.scene)?;
    let ev = {
        let _t = Timer::start("evaluate");
        stages::evaluate_scene(cfg, &scene, cloud)?
    };
    write_json(out.join(EVALUATION), &ev)?;
    write_distances(out, &ev.m3c2)?;
    std::fs::write(out.join(LEAF_TABLE), &ev.table).map_err(|e| PipelineError::Validation(e.to_string()))?;
    ply::write_mesh(out.join(LEAF_MESHES), &ev.leaf_mesh, PlyFormat::BinaryLittleEndian)?;
    for name in [EVALUATION, DISTANCES, LEAF_TABLE, LEAF_MESHES] {
        m.add_artifact(out, name)?;
    }
    log::info!("leaf evaluation\n{}", ev.table);
    m.metric("sigma_m3c2_m", ev.precision.sigma_m3c2);
    m.metric("mean_m3c2_m", ev.precision.mean_m3c2);
    m.metric("m3c2_count", ev.precision.count);
    m.metric("mean_abs_area_diff_pct", ev.mean_abs_area_diff_pct);
    Ok(())
}

fn write_bake(
    cfg: &PipelineConfig,
    mesh: &crate::geometry::TriangleMesh,
    views: &[CameraView],
    save_views: bool,
    out: &Path,
    m: &mut RunManifest,
) -> Result<(), PipelineError> {
    let map = {
        let _t = Timer::start("bake");
        stages::bake_scene(cfg, mesh, views)?
    };
    write_png(out.join(TEXTURE), &map.to_rgb8())?;
    write_count_pgm(out.join(TEXTURE_VIEWS), &map)?;
    m.add_artifact(out, TEXTURE)?;
    m.add_artifact(out, TEXTURE_VIEWS)?;
    if save_views {
        save_cameras(out.join(CAMERAS), views, "view_")?;
        m.add_artifact(out, CAMERAS)?;
        for i in 0..views.len() {
            m.add_artifact(out, &format!("view_{i:02}.png"))?;
        }
    }
    let covered = map.covered.iter().filter(|c| **c).count();
    let seen = map.counts.iter().filter(|c| **c > 0).count();
    m.metric("texels_covered", covered);
    m.metric("texels_seen", seen);
    Ok(())
}

fn write_trace(trace: &[TraceRow], out: &Path, m: &mut RunManifest) -> Result<(), PipelineError> {
    write_trace_csv(out.join(EXPOSURE_TRACE), trace)?;
    m.add_artifact(out, EXPOSURE_TRACE)?;
    if let Some(last) = trace.last() {
        m.metric("exposure_steps", trace.len());
        m.metric("exposure_final", last);
    }
    Ok(())
}
