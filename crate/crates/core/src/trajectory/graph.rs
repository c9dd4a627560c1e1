use nalgebra::Vector3;

use super::factors::{BiasWalkFactor, Factor, GnssFactor, HeadingPitchFactor, ImuFactor, PriorFactor, StateNode, TANGENT_DIM};
use super::{preintegrate_imu, InitMethod, SmootherConfig, TrajectoryError};
use crate::geometry::{so3, Pose};
use crate::sim::{GnssFix, HeadingPitchObs, ImuSample};

/// Nodes (holding the initial estimate) and the factors linking them.
/// Every factor touches one node or two consecutive nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraph {
    pub nodes: Vec<StateNode>,
    pub factors: Vec<Factor>,
    pub huber_delta: Option<f64>,
}

impl FactorGraph {
    fn count(&self, pred: impl Fn(&Factor) -> bool) -> usize {
        self.factors.iter().filter(|f| pred(f)).count()
    }

    pub fn imu_factor_count(&self) -> usize {
        self.count(|f| matches!(f, Factor::Imu(_)))
    }

    pub fn gnss_factor_count(&self) -> usize {
        self.count(|f| matches!(f, Factor::Gnss(_)))
    }

    pub fn heading_factor_count(&self) -> usize {
        self.count(|f| matches!(f, Factor::HeadingPitch(_)))
    }

    pub fn imu_factors(&self) -> impl Iterator<Item = &ImuFactor> {
        self.factors.iter().filter_map(|f| match f {
            Factor::Imu(i) => Some(i),
            _ => None,
        })
    }

    /// Total robust cost at `nodes`.
    pub fn cost(&self, nodes: &[StateNode]) -> f64 {
        self.factors.iter().map(|f| f.cost(nodes)).sum()
    }

    /// Checks that factor indices are valid and the IMU chain connects
    /// every consecutive node pair.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let n = self.nodes.len();
        let mut linked = vec![false; n.saturating_sub(1)];
        for f in &self.factors {
            let ids = f.nodes();
            if ids.iter().any(|&i| i >= n) {
                return Err(TrajectoryError::InvalidConfig("factor references a missing node".into()));
            }
            if ids.len() == 2 {
                if ids[1] != ids[0] + 1 {
                    return Err(TrajectoryError::InvalidConfig("binary factor between non-consecutive nodes".into()));
                }
                if matches!(f, Factor::Imu(_)) {
                    linked[ids[0]] = true;
                }
            }
        }
        if let Some(i) = linked.iter().position(|l| !l) {
            return Err(TrajectoryError::NoOverlap(format!("no imu factor between nodes {i} and {}", i + 1)));
        }
        Ok(())
    }
}

fn sorted<T: Clone>(items: &[T], key: impl Fn(&T) -> f64) -> Vec<T> {
    let mut v = items.to_vec();
    v.sort_by(|a, b| key(a).total_cmp(&key(b)));
    v
}

fn nearest(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        0
    } else if i == times.len() || (t - times[i - 1]) <= (times[i] - t) {
        i - 1
    } else {
        i
    }
}

fn attitude_from(obs: Option<&HeadingPitchObs>, fallback_yaw: f64) -> nalgebra::UnitQuaternion<f64> {
    match obs {
        Some(o) => so3::from_yaw_pitch_roll(so3::heading_to_yaw(o.heading), o.pitch, 0.0),
        None => so3::from_yaw_pitch_roll(fallback_yaw, 0.0, 0.0),
    }
}

/// One keyframe per GNSS fix inside the IMU span, an IMU factor and a bias
/// random-walk factor per consecutive pair, heading/pitch factors on the
/// nearest keyframe within tolerance, and a prior on the first node.
pub fn assemble_graph(
    imu: &[ImuSample],
    gnss: &[GnssFix],
    heading_pitch: &[HeadingPitchObs],
    config: &SmootherConfig,
) -> Result<FactorGraph, TrajectoryError> {
    if imu.is_empty() {
        return Err(TrajectoryError::EmptyStream("imu"));
    }
    if gnss.is_empty() {
        return Err(TrajectoryError::EmptyStream("gnss"));
    }
    let imu = sorted(imu, |s| s.timestamp);
    let (t_lo, t_hi) = (imu[0].timestamp, imu[imu.len() - 1].timestamp);
    let mut fixes = sorted(gnss, |f| f.timestamp);
    fixes.retain(|f| f.timestamp >= t_lo && f.timestamp <= t_hi);
    fixes.dedup_by(|b, a| b.timestamp == a.timestamp);
    if fixes.len() < 2 {
        return Err(TrajectoryError::NoOverlap(format!(
            "{} gnss fixes inside the imu span [{t_lo}, {t_hi}]",
            fixes.len()
        )));
    }
    let hp = sorted(heading_pitch, |o| o.timestamp);
    let times: Vec<f64> = fixes.iter().map(|f| f.timestamp).collect();

    let mut factors = Vec::new();
    let mut deltas = Vec::with_capacity(fixes.len() - 1);
    for (i, w) in times.windows(2).enumerate() {
        let delta = preintegrate_imu(&imu, &Vector3::zeros(), &Vector3::zeros(), w[0], w[1], &config.imu_noise)?;
        deltas.push(delta.clone());
        factors.push(Factor::Imu(ImuFactor::new(i, i + 1, delta)));
        let dt = w[1] - w[0];
        factors.push(Factor::BiasWalk(BiasWalkFactor {
            from: i,
            to: i + 1,
            sigma_gyro: config.gyro_bias_walk * dt.sqrt(),
            sigma_accel: config.accel_bias_walk * dt.sqrt(),
        }));
    }
    for (i, fix) in fixes.iter().enumerate() {
        factors.push(Factor::Gnss(GnssFactor {
            node: i,
            fix: *fix,
            antenna_lever: config.antenna_lever,
            huber: config.huber_delta,
        }));
    }
    let mut attached: Vec<Option<&HeadingPitchObs>> = vec![None; fixes.len()];
    for obs in &hp {
        let i = nearest(&times, obs.timestamp);
        if (times[i] - obs.timestamp).abs() <= config.heading_tolerance {
            factors.push(Factor::HeadingPitch(HeadingPitchFactor {
                node: i,
                obs: *obs,
                use_heading: config.use_heading,
            }));
            attached[i].get_or_insert(obs);
        }
    }

    // the first node's prior comes from the first fix and attitude observation
    let v0 = fix_velocity(&fixes, 0);
    let first_obs = if config.use_heading { hp.first() } else { None };
    let r0 = attitude_from(first_obs, v0.y.atan2(v0.x));
    let p0 = fixes[0].position - r0 * config.antenna_lever;
    let start = StateNode {
        timestamp: times[0],
        pose: Pose::new(p0, r0),
        velocity: v0,
        gyro_bias: Vector3::zeros(),
        accel_bias: Vector3::zeros(),
    };
    let p = config.prior;
    let mut sigmas = [0.0; TANGENT_DIM];
    for (k, s) in [p.rotation, p.position, p.velocity, p.gyro_bias, p.accel_bias].into_iter().enumerate() {
        sigmas[3 * k..3 * k + 3].fill(s);
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(TrajectoryError::InvalidConfig("prior sigmas must be positive".into()));
    }
    factors.insert(0, Factor::Prior(PriorFactor { node: 0, mean: start.clone(), sigmas }));

    let nodes = match config.init {
        InitMethod::DeadReckoning => dead_reckon(&start, &deltas, &times),
        InitMethod::GnssAnchored => gnss_anchored(&fixes, &attached, config),
    };
    let graph = FactorGraph {
        nodes,
        factors,
        huber_delta: config.huber_delta,
    };
    graph.validate()?;
    Ok(graph)
}

/// Velocity from fixes around `i`, widening the window until the baseline
/// is long compared with the fix noise.
fn fix_velocity(fixes: &[GnssFix], i: usize) -> Vector3<f64> {
    let n = fixes.len();
    let (mut a, mut b) = (i.saturating_sub(1), (i + 1).min(n - 1));
    loop {
        let d = fixes[b].position - fixes[a].position;
        let noise = fixes[a].sigma.xy().norm() + fixes[b].sigma.xy().norm();
        if d.xy().norm() >= 20.0 * noise || (a == 0 && b == n - 1) {
            return d / (fixes[b].timestamp - fixes[a].timestamp);
        }
        a = a.saturating_sub(1);
        b = (b + 1).min(n - 1);
    }
}

/// Chains the preintegrated deltas forward from `start`.
pub fn dead_reckon(start: &StateNode, deltas: &[super::PreintegratedDelta], times: &[f64]) -> Vec<StateNode> {
    let mut nodes = vec![start.clone()];
    for (d, &t) in deltas.iter().zip(&times[1..]) {
        let next = super::propagate(nodes.last().expect("at least one node"), d, t);
        nodes.push(next);
    }
    nodes
}

/// Positions from fixes, attitude from attached heading/pitch observations
/// (or the course over ground), velocity from central differences.
pub fn gnss_anchored(fixes: &[GnssFix], attached: &[Option<&HeadingPitchObs>], config: &SmootherConfig) -> Vec<StateNode> {
    let n = fixes.len();
    (0..n)
        .map(|i| {
            let vel = fix_velocity(fixes, i);
            let rot = attitude_from(attached[i], vel.y.atan2(vel.x));
            StateNode {
                timestamp: fixes[i].timestamp,
                pose: Pose::new(fixes[i].position - rot * config.antenna_lever, rot),
                velocity: vel,
                gyro_bias: Vector3::zeros(),
                accel_bias: Vector3::zeros(),
            }
        })
        .collect()
}
