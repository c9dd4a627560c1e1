//! Factor residuals and their Jacobians with respect to the 15-dimensional
//! node tangent `[dtheta, dp, dv, dbg, dba]`. Rotations are perturbed on the
//! right, everything else additively. Residuals are returned whitened.

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::preintegration::PreintegratedDelta;
use crate::geometry::{so3, Pose};
use crate::sim::{gravity_vector, GnssFix, HeadingPitchObs};

pub const TANGENT_DIM: usize = 15;
pub(crate) const ROT: usize = 0;
pub(crate) const POS: usize = 3;
pub(crate) const VEL: usize = 6;
pub(crate) const BG: usize = 9;
pub(crate) const BA: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateNode {
    pub timestamp: f64,
    pub pose: Pose,
    pub velocity: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl StateNode {
    pub fn retract(&self, delta: &[f64]) -> StateNode {
        let v3 = |o: usize| Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
        StateNode {
            timestamp: self.timestamp,
            pose: Pose::new(
                self.pose.position + v3(POS),
                self.pose.rotation * so3::exp(&v3(ROT)),
            ),
            velocity: self.velocity + v3(VEL),
            gyro_bias: self.gyro_bias + v3(BG),
            accel_bias: self.accel_bias + v3(BA),
        }
    }

    fn rot(&self) -> Matrix3<f64> {
        self.pose.rotation.to_rotation_matrix().into_inner()
    }
}

/// Whitening operator `L^{-1}` for a covariance `L L^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Whitener(DMatrix<f64>);

impl Whitener {
    pub fn from_covariance(cov: &DMatrix<f64>) -> Self {
        let n = cov.nrows();
        let scale = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let jitter = DMatrix::identity(n, n) * (scale * 1e-12);
        let chol = (cov + jitter).cholesky().expect("covariance is positive definite after jitter");
        let l_inv = chol.l().solve_lower_triangular(&DMatrix::identity(n, n)).expect("triangular factor is invertible");
        Self(l_inv)
    }

    pub fn from_sigmas(sigmas: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| 1.0 / s))))
    }

    fn apply(&self, r: &mut DVector<f64>, jac: &mut [(usize, DMatrix<f64>)]) {
        *r = &self.0 * &*r;
        for (_, j) in jac.iter_mut() {
            *j = &self.0 * &*j;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImuFactor {
    pub from: usize,
    pub to: usize,
    pub delta: PreintegratedDelta,
    pub whitener: Whitener,
}

impl ImuFactor {
    pub fn new(from: usize, to: usize, delta: PreintegratedDelta) -> Self {
        let cov = DMatrix::from_iterator(9, 9, delta.covariance.iter().copied());
        Self { from, to, whitener: Whitener::from_covariance(&cov), delta }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnssFactor {
    pub node: usize,
    pub fix: GnssFix,
    pub antenna_lever: Vector3<f64>,
    /// Huber threshold in whitened units; `None` disables robustification.
    pub huber: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadingPitchFactor {
    pub node: usize,
    pub obs: HeadingPitchObs,
    pub use_heading: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorFactor {
    pub node: usize,
    pub mean: StateNode,
    /// Standard deviations in tangent order.
    pub sigmas: [f64; TANGENT_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasWalkFactor {
    pub from: usize,
    pub to: usize,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Imu(ImuFactor),
    Gnss(GnssFactor),
    HeadingPitch(HeadingPitchFactor),
    Prior(PriorFactor),
    BiasWalk(BiasWalkFactor),
}

/// Whitened residual and per-node Jacobian blocks (each `dim × 15`).
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobians: Vec<(usize, DMatrix<f64>)>,
}

fn put(j: &mut DMatrix<f64>, row: usize, col: usize, m: &Matrix3<f64>) {
    j.fixed_view_mut::<3, 3>(row, col).copy_from(m);
}

fn put_vec(r: &mut DVector<f64>, row: usize, v: &Vector3<f64>) {
    r.fixed_rows_mut::<3>(row).copy_from(v);
}

impl Factor {
    pub fn nodes(&self) -> Vec<usize> {
        match self {
            Factor::Imu(f) => vec![f.from, f.to],
            Factor::BiasWalk(f) => vec![f.from, f.to],
            Factor::Gnss(f) => vec![f.node],
            Factor::HeadingPitch(f) => vec![f.node],
            Factor::Prior(f) => vec![f.node],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Imu(_) => 9,
            Factor::BiasWalk(_) => 6,
            Factor::Gnss(_) => 3,
            Factor::HeadingPitch(_) => 2,
            Factor::Prior(_) => TANGENT_DIM,
        }
    }

    /// Huber threshold if this factor is robustified.
    pub fn huber(&self) -> Option<f64> {
        match self {
            Factor::Gnss(f) => f.huber,
            _ => None,
        }
    }

    /// Whitened residual and Jacobians, without robust weighting.
    pub fn linearize(&self, nodes: &[StateNode]) -> Linearization {
        match self {
            Factor::Imu(f) => imu(f, &nodes[f.from], &nodes[f.to]),
            Factor::Gnss(f) => gnss(f, &nodes[f.node]),
            Factor::HeadingPitch(f) => heading_pitch(f, &nodes[f.node]),
            Factor::Prior(f) => prior(f, &nodes[f.node]),
            Factor::BiasWalk(f) => bias_walk(f, &nodes[f.from], &nodes[f.to]),
        }
    }

    /// Robust cost `rho(|r|)`; plain `½|r|²` for non-robust factors.
    pub fn cost(&self, nodes: &[StateNode]) -> f64 {
        robust_cost(self.linearize(nodes).residual.norm(), self.huber())
    }
}

pub(crate) fn robust_cost(norm: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(d) if norm > d => d * (norm - 0.5 * d),
        _ => 0.5 * norm * norm,
    }
}

/// IRLS weight on the squared residual.
pub(crate) fn robust_weight(norm: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(d) if norm > d => d / norm,
        _ => 1.0,
    }
}

fn imu(f: &ImuFactor, a: &StateNode, b: &StateNode) -> Linearization {
    let g = gravity_vector();
    let dt = f.delta.duration;
    let (dr, dv, dp) = f.delta.corrected(&a.gyro_bias, &a.accel_bias);
    let ri = a.rot();
    let rit = ri.transpose();
    let rel = a.pose.rotation.inverse() * b.pose.rotation;
    let e_r = so3::log(&(dr.inverse() * rel));
    let v_term = rit * (b.velocity - a.velocity - g * dt);
    let p_term = rit * (b.pose.position - a.pose.position - a.velocity * dt - 0.5 * g * dt * dt);
    let e_v = v_term - dv;
    let e_p = p_term - dp;

    let mut r = DVector::zeros(9);
    put_vec(&mut r, 0, &e_r);
    put_vec(&mut r, 3, &e_v);
    put_vec(&mut r, 6, &e_p);

    let jr_inv = so3::right_jacobian_inv(&e_r);
    let rel_t = rel.to_rotation_matrix().into_inner().transpose();
    let dbg = a.gyro_bias - f.delta.gyro_bias;
    let jrb = f.delta.d_rotation_d_gyro_bias();
    let exp_e_t = so3::exp(&e_r).to_rotation_matrix().into_inner().transpose();

    let mut ja = DMatrix::zeros(9, TANGENT_DIM);
    put(&mut ja, 0, ROT, &(-jr_inv * rel_t));
    put(&mut ja, 0, BG, &(-jr_inv * exp_e_t * so3::right_jacobian(&(jrb * dbg)) * jrb));
    put(&mut ja, 3, ROT, &so3::hat(&v_term));
    put(&mut ja, 3, VEL, &(-rit));
    put(&mut ja, 3, BG, &(-f.delta.d_velocity_d_gyro_bias()));
    put(&mut ja, 3, BA, &(-f.delta.d_velocity_d_accel_bias()));
    put(&mut ja, 6, ROT, &so3::hat(&p_term));
    put(&mut ja, 6, POS, &(-rit));
    put(&mut ja, 6, VEL, &(-rit * dt));
    put(&mut ja, 6, BG, &(-f.delta.d_position_d_gyro_bias()));
    put(&mut ja, 6, BA, &(-f.delta.d_position_d_accel_bias()));

    let mut jb = DMatrix::zeros(9, TANGENT_DIM);
    put(&mut jb, 0, ROT, &jr_inv);
    put(&mut jb, 3, VEL, &rit);
    put(&mut jb, 6, POS, &rit);

    let mut jac = vec![(f.from, ja), (f.to, jb)];
    f.whitener.apply(&mut r, &mut jac);
    Linearization { residual: r, jacobians: jac }
}

fn gnss(f: &GnssFactor, n: &StateNode) -> Linearization {
    let rot = n.rot();
    let e = n.pose.position + rot * f.antenna_lever - f.fix.position;
    let mut r = DVector::zeros(3);
    put_vec(&mut r, 0, &e);
    let mut j = DMatrix::zeros(3, TANGENT_DIM);
    put(&mut j, 0, ROT, &(-rot * so3::hat(&f.antenna_lever)));
    put(&mut j, 0, POS, &Matrix3::identity());
    let mut jac = vec![(f.node, j)];
    Whitener::from_sigmas(f.fix.sigma.as_slice()).apply(&mut r, &mut jac);
    Linearization { residual: r, jacobians: jac }
}

fn heading_pitch(f: &HeadingPitchFactor, n: &StateNode) -> Linearization {
    let rot = n.rot();
    let x = rot * Vector3::x();
    let h2 = x.x * x.x + x.y * x.y;
    let rho = h2.sqrt();
    let n2 = h2 + x.z * x.z;
    let dx = -rot * so3::hat(&Vector3::x());
    let dh = nalgebra::RowVector3::new(x.y / h2, -x.x / h2, 0.0) * dx;
    let dpitch = nalgebra::RowVector3::new(-x.z * x.x / (rho * n2), -x.z * x.y / (rho * n2), rho / n2) * dx;

    let heading_w = if f.use_heading { 1.0 } else { 0.0 };
    let r = DVector::from_vec(vec![
        heading_w * so3::wrap_angle(so3::heading_of(&x) - f.obs.heading) / f.obs.heading_sigma,
        (so3::pitch_of(&x) - f.obs.pitch) / f.obs.pitch_sigma,
    ]);
    let mut j = DMatrix::zeros(2, TANGENT_DIM);
    for c in 0..3 {
        j[(0, ROT + c)] = heading_w * dh[c] / f.obs.heading_sigma;
        j[(1, ROT + c)] = dpitch[c] / f.obs.pitch_sigma;
    }
    Linearization { residual: r, jacobians: vec![(f.node, j)] }
}

fn prior(f: &PriorFactor, n: &StateNode) -> Linearization {
    let e_r = so3::log(&(f.mean.pose.rotation.inverse() * n.pose.rotation));
    let mut r = DVector::zeros(TANGENT_DIM);
    put_vec(&mut r, ROT, &e_r);
    put_vec(&mut r, POS, &(n.pose.position - f.mean.pose.position));
    put_vec(&mut r, VEL, &(n.velocity - f.mean.velocity));
    put_vec(&mut r, BG, &(n.gyro_bias - f.mean.gyro_bias));
    put_vec(&mut r, BA, &(n.accel_bias - f.mean.accel_bias));
    let mut j = DMatrix::identity(TANGENT_DIM, TANGENT_DIM);
    put(&mut j, ROT, ROT, &so3::right_jacobian_inv(&e_r));
    let mut jac = vec![(f.node, j)];
    Whitener::from_sigmas(&f.sigmas).apply(&mut r, &mut jac);
    Linearization { residual: r, jacobians: jac }
}

fn bias_walk(f: &BiasWalkFactor, a: &StateNode, b: &StateNode) -> Linearization {
    let mut r = DVector::zeros(6);
    put_vec(&mut r, 0, &(b.gyro_bias - a.gyro_bias));
    put_vec(&mut r, 3, &(b.accel_bias - a.accel_bias));
    let mut ja = DMatrix::zeros(6, TANGENT_DIM);
    let mut jb = DMatrix::zeros(6, TANGENT_DIM);
    put(&mut ja, 0, BG, &(-Matrix3::identity()));
    put(&mut ja, 3, BA, &(-Matrix3::identity()));
    put(&mut jb, 0, BG, &Matrix3::identity());
    put(&mut jb, 3, BA, &Matrix3::identity());
    let mut jac = vec![(f.from, ja), (f.to, jb)];
    let s = [f.sigma_gyro, f.sigma_gyro, f.sigma_gyro, f.sigma_accel, f.sigma_accel, f.sigma_accel];
    Whitener::from_sigmas(&s).apply(&mut r, &mut jac);
    Linearization { residual: r, jacobians: jac }
}

/// Dead-reckons the state at the end of `delta` from `start`.
pub fn propagate(start: &StateNode, delta: &PreintegratedDelta, timestamp: f64) -> StateNode {
    let g = gravity_vector();
    let dt = delta.duration;
    let (dr, dv, dp) = delta.corrected(&start.gyro_bias, &start.accel_bias);
    let r = start.pose.rotation;
    StateNode {
        timestamp,
        pose: Pose::new(
            start.pose.position + start.velocity * dt + 0.5 * g * dt * dt + r * dp,
            UnitQuaternion::new_normalize(*(r * dr).quaternion()),
        ),
        velocity: start.velocity + g * dt + r * dv,
        gyro_bias: start.gyro_bias,
        accel_bias: start.accel_bias,
    }
}

/// Central finite-difference Jacobian of the whitened residual for one node.
pub fn numeric_jacobian(factor: &Factor, nodes: &[StateNode], node: usize, h: f64) -> DMatrix<f64> {
    let dim = factor.dim();
    let mut j = DMatrix::zeros(dim, TANGENT_DIM);
    let mut work = nodes.to_vec();
    for k in 0..TANGENT_DIM {
        let mut d = [0.0; TANGENT_DIM];
        d[k] = h;
        work[node] = nodes[node].retract(&d);
        let plus = factor.linearize(&work).residual;
        d[k] = -h;
        work[node] = nodes[node].retract(&d);
        let minus = factor.linearize(&work).residual;
        work[node] = nodes[node].clone();
        j.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    j
}
