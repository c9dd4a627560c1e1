use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::factors::{robust_cost, robust_weight, Factor, StateNode, TANGENT_DIM};
use super::{FactorGraph, SmootherConfig, TrajectoryError};
use crate::geometry::PoseTrack;

type Block = SMatrix<f64, TANGENT_DIM, TANGENT_DIM>;
type BlockVec = SVector<f64, TANGENT_DIM>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub nodes: usize,
    pub factors: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmootherSolution {
    pub nodes: Vec<StateNode>,
    pub track: PoseTrack,
    pub report: OptimReport,
}

/// Block-tridiagonal normal equations: `diag[i] = H[i][i]`,
/// `upper[i] = H[i][i+1]`, gradient `J^T W r`.
struct Normal {
    diag: Vec<Block>,
    upper: Vec<Block>,
    grad: Vec<BlockVec>,
    cost: f64,
}

fn build_normal(graph: &FactorGraph, nodes: &[StateNode]) -> Normal {
    let n = nodes.len();
    let mut sys = Normal {
        diag: vec![Block::zeros(); n],
        upper: vec![Block::zeros(); n.saturating_sub(1)],
        grad: vec![BlockVec::zeros(); n],
        cost: 0.0,
    };
    for f in &graph.factors {
        let lin = f.linearize(nodes);
        let norm = lin.residual.norm();
        sys.cost += robust_cost(norm, f.huber());
        let w = robust_weight(norm, f.huber());
        for (a, ja) in &lin.jacobians {
            let jta = ja.transpose();
            let g = &jta * &lin.residual * w;
            for k in 0..TANGENT_DIM {
                sys.grad[*a][k] += g[k];
            }
            for (b, jb) in &lin.jacobians {
                if b < a {
                    continue;
                }
                let h = &jta * jb * w;
                let target = if a == b { &mut sys.diag[*a] } else { &mut sys.upper[*a] };
                for r in 0..TANGENT_DIM {
                    for c in 0..TANGENT_DIM {
                        target[(r, c)] += h[(r, c)];
                    }
                }
            }
        }
    }
    sys
}

fn total_cost(graph: &FactorGraph, nodes: &[StateNode]) -> f64 {
    graph.factors.iter().map(|f: &Factor| f.cost(nodes)).sum()
}

/// Solves `(H + lambda diag(H)) x = -g` by block Cholesky elimination along
/// the chain. Returns `None` if a pivot block is not positive definite.
fn solve_damped(sys: &Normal, lambda: f64) -> Option<Vec<BlockVec>> {
    let n = sys.diag.len();
    let mut pivots = Vec::with_capacity(n);
    let mut y: Vec<BlockVec> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = sys.diag[i];
        for k in 0..TANGENT_DIM {
            s[(k, k)] += lambda * sys.diag[i][(k, k)];
        }
        let mut rhs = -sys.grad[i];
        if i > 0 {
            let c = &sys.upper[i - 1];
            let prev: &nalgebra::Cholesky<f64, nalgebra::Const<TANGENT_DIM>> = &pivots[i - 1];
            let sinv_c = prev.solve(c);
            s -= c.transpose() * sinv_c;
            rhs -= c.transpose() * prev.solve(&y[i - 1]);
        }
        let s = 0.5 * (s + s.transpose());
        pivots.push(s.cholesky()?);
        y.push(rhs);
    }
    let mut x = vec![BlockVec::zeros(); n];
    for i in (0..n).rev() {
        let mut rhs = y[i];
        if i + 1 < n {
            rhs -= sys.upper[i] * x[i + 1];
        }
        x[i] = pivots[i].solve(&rhs);
    }
    Some(x)
}

/// Levenberg-Marquardt over all nodes, starting from `init` or, if `None`,
/// from the estimate stored in the graph. Accepted steps never increase the
/// robust cost.
pub fn optimize_trajectory(
    graph: &FactorGraph,
    init: Option<&[StateNode]>,
    config: &SmootherConfig,
) -> Result<SmootherSolution, TrajectoryError> {
    graph.validate()?;
    let mut nodes: Vec<StateNode> = init.map_or_else(|| graph.nodes.clone(), <[StateNode]>::to_vec);
    if nodes.len() != graph.nodes.len() {
        return Err(TrajectoryError::InvalidConfig(format!(
            "initial estimate has {} nodes, graph has {}",
            nodes.len(),
            graph.nodes.len()
        )));
    }
    let mut sys = build_normal(graph, &nodes);
    let initial_cost = sys.cost;
    if !initial_cost.is_finite() {
        return Err(TrajectoryError::Diverged("non-finite initial cost".into()));
    }
    let max_diag = sys.diag.iter().flat_map(|b| (0..TANGENT_DIM).map(move |k| b[(k, k)])).fold(0.0, f64::max);
    for (i, b) in sys.diag.iter().enumerate() {
        if let Some(k) = (0..TANGENT_DIM).find(|&k| !(b[(k, k)] > 1e-14 * max_diag)) {
            return Err(TrajectoryError::SingularSystem(format!("state component {k} of node {i} is unconstrained")));
        }
    }

    let mut lambda = config.lambda_init;
    let mut iterations = 0;
    let mut converged = initial_cost < 1e-20;
    let mut last_rel = f64::INFINITY;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let Some(step) = solve_damped(&sys, lambda) else {
            return Err(TrajectoryError::SingularSystem(format!("block factorization failed at lambda {lambda:e}")));
        };
        let candidate: Vec<StateNode> = nodes.iter().zip(&step).map(|(n, d)| n.retract(d.as_slice())).collect();
        let new_cost = total_cost(graph, &candidate);
        if new_cost.is_finite() && new_cost <= sys.cost {
            let rel = (sys.cost - new_cost) / sys.cost.max(f64::MIN_POSITIVE);
            debug_assert!(new_cost <= sys.cost);
            nodes = candidate;
            sys = build_normal(graph, &nodes);
            lambda = (lambda / config.lambda_factor).max(1e-12);
            last_rel = rel;
            let step_norm = step.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt();
            if rel < config.relative_tolerance || sys.cost < 1e-20 || step_norm < 1e-12 {
                converged = true;
            }
        } else {
            lambda *= config.lambda_factor;
            if lambda > 1e10 {
                if last_rel < 1e-6 || sys.cost < 1e-20 {
                    // no further decrease available near the minimum
                    converged = true;
                    break;
                }
                return Err(TrajectoryError::Diverged(format!(
                    "cost {:.6e} could not be reduced (lambda {lambda:e})",
                    sys.cost
                )));
            }
        }
    }
    let track = PoseTrack::new(
        nodes.iter().map(|n| n.timestamp).collect(),
        nodes.iter().map(|n| n.pose).collect(),
        "enu",
    )
    .map_err(|e| TrajectoryError::InvalidConfig(e.to_string()))?;
    let report = OptimReport {
        initial_cost,
        final_cost: sys.cost,
        iterations,
        converged,
        nodes: nodes.len(),
        factors: graph.factors.len(),
    };
    Ok(SmootherSolution { nodes, track, report })
}
