//! Problem definition: obstacles, objectives, and solver configuration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Isometry3, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::BarrierSpec;
use crate::geometry::{Aabb, Primitive};
use crate::kinematics::{ChainError, KinematicChain};
use crate::trajectory::{ExtractionMatrices, TrajectoryError, TrajectoryParams, TrajectorySpec};

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("objective value is not finite")]
    NonFinite,
}

/// A static obstacle: a primitive and its world pose.
#[derive(Debug, Clone)]
pub struct Obstacle {
    pub primitive: Primitive,
    pub pose: Isometry3<f64>,
}

impl Obstacle {
    pub fn aabb(&self) -> Aabb {
        self.primitive.world_aabb(&self.pose)
    }
}

/// Objective evaluation: value, gradient, and (on request) a positive
/// semidefinite curvature estimate.
pub struct CostEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Twice-differentiable cost over the trajectory parameters.
pub trait CostFunction: Send + Sync {
    fn evaluate(
        &self,
        chain: &KinematicChain,
        params: &TrajectoryParams,
        matrices: &ExtractionMatrices,
        want_hessian: bool,
    ) -> Result<CostEval, CostError>;
}

/// Squared distance between a point on a link and a world target, at the end
/// of the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetTerm {
    pub link: usize,
    pub local_point: Point3<f64>,
    pub position: Point3<f64>,
    pub weight: f64,
}

/// The built-in objective: weighted end-of-horizon target terms plus a
/// Laplacian smoothness penalty over control points.
#[derive(Debug, Clone, Default)]
pub struct CompositeObjective {
    pub targets: Vec<TargetTerm>,
    pub smoothness_weight: f64,
}

impl CostFunction for CompositeObjective {
    fn evaluate(
        &self,
        chain: &KinematicChain,
        params: &TrajectoryParams,
        matrices: &ExtractionMatrices,
        want_hessian: bool,
    ) -> Result<CostEval, CostError> {
        let dim = params.theta().len();
        let mut value = 0.0;
        let mut grad = DVector::zeros(dim);
        let mut hess = if want_hessian {
            Some(DMatrix::zeros(dim, dim))
        } else {
            None
        };

        if !self.targets.is_empty() {
            let t_end = params.horizon();
            let theta_end = params.eval(matrices, t_end)?;
            let fk = chain.forward_kinematics(&theta_end)?;
            let basis = params.basis_gradient(matrices, t_end)?;
            for target in &self.targets {
                let p = fk[target.link] * target.local_point;
                let jac = chain.point_jacobian_with_fk(&fk, target.link, &target.local_point)?;
                // World point sensitivity: 3 x dim.
                let full = &jac * &basis;
                let resid = p - target.position;
                value += target.weight * resid.norm_squared();
                grad += full.transpose() * resid * (2.0 * target.weight);
                if let Some(h) = hess.as_mut() {
                    // Gauss-Newton curvature of the squared residual.
                    *h += full.transpose() * &full * (2.0 * target.weight);
                }
            }
        }

        if self.smoothness_weight != 0.0 {
            let w = self.smoothness_weight;
            for k in 0..params.joint_count() {
                let values = matrices.joint_values(k, params.theta());
                let m = matrices.value_rows(k);
                for i in 1..values.len() - 1 {
                    let lap = values[i - 1] - 2.0 * values[i] + values[i + 1];
                    value += w * lap * lap;
                    let row =
                        (m.row(i - 1) - m.row(i) * 2.0 + m.row(i + 1)).transpose();
                    grad.axpy(2.0 * w * lap, &row, 1.0);
                    if let Some(h) = hess.as_mut() {
                        h.ger(2.0 * w, &row, &row, 1.0);
                    }
                }
            }
        }

        if !value.is_finite() {
            return Err(CostError::NonFinite);
        }
        Ok(CostEval {
            value,
            gradient: grad,
            hessian: hess,
        })
    }
}

/// Search-direction mode of the descent loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionOrder {
    First,
    Second,
}

/// One collision-avoidance problem instance.
#[derive(Clone)]
pub struct Problem {
    pub chain: KinematicChain,
    pub obstacles: Vec<Obstacle>,
    pub objective: Arc<dyn CostFunction>,
    /// Feasible start configuration; the trajectory is pinned to it at t = 0.
    pub start: DVector<f64>,
    pub self_collision: bool,
    /// Self-pairs on links sharing a joint are excluded unless set.
    pub include_adjacent_self_pairs: bool,
}

/// Everything the solver loop holds constant while evaluating.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Barrier(#[from] crate::barrier::BarrierError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("solver config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub barrier: BarrierSpec,
    pub trajectory: TrajectorySpec,
    /// Uniform intervals per pair at initialization.
    pub initial_splits: usize,
    pub order: DirectionOrder,
    /// Initial line-search step.
    pub alpha0: f64,
    /// Initial step floor below which the line search subdivides.
    pub eps_alpha: f64,
    /// Restore the step floor to `eps_alpha` at the start of every line
    /// search. When off, the floor decays monotonically across the run,
    /// which throttles subdivision and lets iterates crawl along the
    /// conservative safety boundary.
    pub eps_alpha_reset: bool,
    /// Optional per-outer-iteration decay of eps_d; off by default.
    pub eps_d_decay: Option<f64>,
    /// Inner-loop iteration cap per barrier weight; a stall diagnostic.
    pub max_inner_iterations: usize,
    /// Cap on line-search shrink/subdivide events per invocation.
    pub stall_cap: u64,
    /// Rounds of up-front subdivision allowed to make the initial iterate
    /// safe before reporting it infeasible.
    pub presubdivision_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            barrier: BarrierSpec::default(),
            trajectory: TrajectorySpec::default(),
            initial_splits: 8,
            order: DirectionOrder::Second,
            alpha0: 1.0,
            eps_alpha: 0.0625,
            eps_alpha_reset: true,
            eps_d_decay: None,
            max_inner_iterations: 20_000,
            stall_cap: 1_000_000,
            presubdivision_rounds: 32,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.barrier.validate()?;
        self.trajectory.validate()?;
        if self.initial_splits < 1 {
            return Err(ConfigError::Invalid("initial_splits must be >= 1".into()));
        }
        if !(self.alpha0 > 0.0) {
            return Err(ConfigError::Invalid("alpha0 must be positive".into()));
        }
        if !(self.eps_alpha > 0.0) {
            return Err(ConfigError::Invalid("eps_alpha must be positive".into()));
        }
        if let Some(decay) = self.eps_d_decay {
            if !(decay > 0.0 && decay < 1.0) {
                return Err(ConfigError::Invalid(
                    "eps_d_decay must lie in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Borrowed evaluation context threaded through energy and safety code.
pub struct EvalContext<'a> {
    pub chain: &'a KinematicChain,
    pub obstacles: &'a [Obstacle],
    pub objective: &'a dyn CostFunction,
    pub matrices: &'a ExtractionMatrices,
    pub barrier: &'a BarrierSpec,
}
