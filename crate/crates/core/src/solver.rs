//! The feasible interior-point loop.
//!
//! Outer loop: continuation on the barrier weight, `mu <- gamma * mu` until
//! it falls to `eps_mu`. Inner loop: descend while the gradient infinity
//! norm exceeds `eps_d`, stepping through a line search that accepts a step
//! only when the trial point passes the conservative safety check *and* the
//! sufficient-decrease test. When the safety check blocks progress at the
//! step floor `eps_alpha`, the floor shrinks, the violating interval is
//! midpoint subdivided, and the energy and direction are re-evaluated at the
//! current point; the step size itself is kept. Every accepted iterate
//! therefore satisfies the continuous-time clearance constraints, not just
//! the sampled ones.

use std::time::Instant;

use nalgebra::DVector;
use thiserror::Error;

use crate::constraints::{init_intervals, ConstraintError, ConstraintSet, Energy};
use crate::problem::{ConfigError, DirectionOrder, EvalContext, Problem, SolverConfig};
use crate::trajectory::{ExtractionMatrices, TrajectoryError, TrajectoryParams};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(
        "initial trajectory is infeasible: pair {pair} at t = {time} has distance {distance} \
         (required clearance {required})"
    )]
    InfeasibleInitial {
        pair: usize,
        time: f64,
        distance: f64,
        required: f64,
    },
    #[error("initial trajectory violates joint limits or rate bounds")]
    InfeasibleInitialLimits,
    #[error(
        "could not certify the initial trajectory safe after {rounds} subdivision rounds \
         (pair {pair}, t = {time}, distance {distance}, threshold {threshold})"
    )]
    InitialSafetyStall {
        rounds: usize,
        pair: usize,
        time: f64,
        distance: f64,
        threshold: f64,
    },
    #[error("line search stalled after {events} shrink/subdivide events")]
    LineSearchStall { events: u64 },
    #[error("inner loop exceeded {iterations} iterations at mu = {mu}")]
    InnerLoopStall { iterations: usize, mu: f64 },
    #[error("search direction is not a descent direction")]
    NonDescent,
    #[error("energy is not finite at the current iterate")]
    NonFiniteEnergy,
}

/// One accepted iterate.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    /// Infinity norm of the first-order direction, i.e. of the gradient.
    pub grad_inf: f64,
    pub alpha: f64,
    pub subdivision_count: u64,
    pub active_terms: usize,
    pub mu: f64,
    pub wall_ms: f64,
    pub theta: DVector<f64>,
}

/// Append-only record of accepted iterates.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceLog {
    pub records: Vec<IterationRecord>,
}

impl ConvergenceLog {
    /// Comma-separated rows. Wall time is reported as written only when
    /// `include_timing` is set; otherwise the column is zeroed so repeat
    /// runs are byte-identical.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("iteration,energy,grad_inf,alpha,subdivisions,mu,wall_ms\n");
        for r in &self.records {
            let wall = if include_timing { r.wall_ms } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration, r.energy, r.grad_inf, r.alpha, r.subdivision_count, r.mu, wall
            ));
        }
        out
    }
}

/// Mutable solver state: the defining invariant is that `params` passes the
/// safety check against `set` at all times after initialization.
pub struct SolverState {
    pub params: TrajectoryParams,
    pub mu: f64,
    pub eps_alpha: f64,
    pub set: ConstraintSet,
    pub log: ConvergenceLog,
}

/// Search direction from an assembled energy: steepest descent, or the
/// modulated-Newton step when curvature is present.
pub fn search_direction(energy: &Energy, order: DirectionOrder) -> Result<DVector<f64>, SolverError> {
    let grad = energy.gradient.as_ref().ok_or(SolverError::NonFiniteEnergy)?;
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(SolverError::NonFiniteEnergy);
    }
    let d = match order {
        DirectionOrder::First => -grad,
        DirectionOrder::Second => {
            let h = energy
                .hessian
                .as_ref()
                .expect("second-order assembly carries a modulated Hessian");
            let chol = h
                .clone()
                .cholesky()
                .expect("modulated Hessian is positive definite");
            chol.solve(&(-grad))
        }
    };
    if grad.norm_squared() > 0.0 && d.dot(grad) >= 0.0 {
        return Err(SolverError::NonDescent);
    }
    Ok(d)
}

pub struct Solver<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    matrices: ExtractionMatrices,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a Problem, config: &'a SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let matrices = ExtractionMatrices::new(&config.trajectory, &problem.start)?;
        Ok(Self {
            problem,
            config,
            matrices,
        })
    }

    pub fn matrices(&self) -> &ExtractionMatrices {
        &self.matrices
    }

    pub fn ctx(&self) -> EvalContext<'_> {
        EvalContext {
            chain: &self.problem.chain,
            obstacles: &self.problem.obstacles,
            objective: self.problem.objective.as_ref(),
            matrices: &self.matrices,
            barrier: &self.config.barrier,
        }
    }

    /// Builds the initial state: constant trajectory at the start
    /// configuration, uniform interval partition, feasibility check, and
    /// up-front subdivision until the initial iterate is safe.
    pub fn initialize(&self) -> Result<SolverState, SolverError> {
        let params =
            TrajectoryParams::constant(self.config.trajectory, self.problem.start.clone())?;
        let ctx = self.ctx();
        let mut set = init_intervals(&ctx, self.problem, &params, self.config.initial_splits)?;

        // Feasibility first: joint limits, then strict clearance at every
        // midpoint (and in fact at every time; the trajectory is constant).
        let limits = crate::trajectory::limit_barrier(
            &params,
            ctx.chain,
            ctx.matrices,
            ctx.barrier,
            false,
        );
        if !limits.value.is_finite() {
            return Err(SolverError::InfeasibleInitialLimits);
        }
        for leaf in set.leaves() {
            let d = set
                .pair_distance(&ctx, &params, leaf.pair, leaf.midpoint())?
                .distance;
            if d <= ctx.barrier.d0 {
                return Err(SolverError::InfeasibleInitial {
                    pair: leaf.pair,
                    time: leaf.midpoint(),
                    distance: d,
                    required: ctx.barrier.d0,
                });
            }
        }

        // Safety may still fail through the conservative margin; shrink it by
        // subdividing every violating leaf, a bounded number of rounds.
        let mut rounds = 0;
        loop {
            let violations = set.safety_violations(&ctx, &params)?;
            if violations.is_empty() {
                break;
            }
            if rounds >= self.config.presubdivision_rounds {
                let v = &violations[0];
                return Err(SolverError::InitialSafetyStall {
                    rounds,
                    pair: v.leaf.pair,
                    time: v.leaf.midpoint(),
                    distance: v.distance,
                    threshold: v.threshold,
                });
            }
            for v in &violations {
                set.subdivide(&v.leaf)?;
            }
            rounds += 1;
        }

        Ok(SolverState {
            params,
            mu: self.config.barrier.mu,
            eps_alpha: self.config.eps_alpha,
            set,
            log: ConvergenceLog::default(),
        })
    }

    fn assemble(
        &self,
        state: &mut SolverState,
        params: &TrajectoryParams,
    ) -> Result<Energy, SolverError> {
        let ctx = self.ctx();
        let mu = state.mu;
        Ok(state
            .set
            .assemble_energy(&ctx, params, mu, self.config.order)?)
    }

    /// The safety-aware line search. On success returns the accepted step
    /// size; `energy` and `direction` reflect any re-evaluation forced by
    /// subdivision and belong to the *current* iterate.
    pub fn line_search(
        &self,
        state: &mut SolverState,
        energy: &mut Energy,
        direction: &mut DVector<f64>,
    ) -> Result<f64, SolverError> {
        let ctx = self.ctx();
        let gamma = self.config.barrier.gamma;
        let c = self.config.barrier.c_wolfe;
        let mut alpha = self.config.alpha0;
        let mut events: u64 = 0;
        if self.config.eps_alpha_reset {
            state.eps_alpha = self.config.eps_alpha;
        }
        loop {
            let trial = state.params.stepped(direction, alpha);
            let violation = state.set.safety_check(&ctx, &trial)?;
            if violation.is_none() {
                let mu = state.mu;
                let trial_value = state.set.energy_value(&ctx, &trial, mu)?;
                let slope = direction.dot(energy.gradient.as_ref().unwrap());
                if trial_value <= energy.value + c * alpha * slope {
                    return Ok(alpha);
                }
            }
            events += 1;
            if events > self.config.stall_cap {
                return Err(SolverError::LineSearchStall { events });
            }
            match violation {
                Some(v) => {
                    if alpha <= state.eps_alpha {
                        state.eps_alpha *= gamma;
                        state.set.subdivide(&v.leaf)?;
                        // Re-evaluate at the current iterate and recompute
                        // the direction; alpha is kept.
                        let params = state.params.clone();
                        *energy = self.assemble(state, &params)?;
                        if !energy.value.is_finite() {
                            return Err(SolverError::NonFiniteEnergy);
                        }
                        *direction = search_direction(energy, self.config.order)?;
                    } else {
                        alpha *= gamma;
                    }
                }
                None => {
                    alpha *= gamma;
                }
            }
            if alpha == 0.0 || !alpha.is_finite() {
                return Err(SolverError::LineSearchStall { events });
            }
        }
    }

    /// Runs the full interior-point method and returns the final parameters
    /// with the log of accepted iterates.
    pub fn solve(&self) -> Result<(TrajectoryParams, ConvergenceLog), SolverError> {
        let mut state = self.initialize()?;
        let started = Instant::now();
        let mut eps_d = self.config.barrier.eps_d;
        let mut iteration = 0usize;

        while state.mu > self.config.barrier.eps_mu {
            let params = state.params.clone();
            let mut energy = self.assemble(&mut state, &params)?;
            if !energy.value.is_finite() {
                return Err(SolverError::NonFiniteEnergy);
            }
            let mut inner = 0usize;
            loop {
                let grad_inf = energy
                    .gradient
                    .as_ref()
                    .ok_or(SolverError::NonFiniteEnergy)?
                    .amax();
                if grad_inf <= eps_d {
                    break;
                }
                let mut direction = search_direction(&energy, self.config.order)?;
                let alpha = self.line_search(&mut state, &mut energy, &mut direction)?;
                state.params = state.params.stepped(&direction, alpha);
                iteration += 1;
                inner += 1;
                let params = state.params.clone();
                energy = self.assemble(&mut state, &params)?;
                if !energy.value.is_finite() {
                    return Err(SolverError::NonFiniteEnergy);
                }
                state.log.records.push(IterationRecord {
                    iteration,
                    energy: energy.value,
                    grad_inf: energy.gradient.as_ref().unwrap().amax(),
                    alpha,
                    subdivision_count: state.set.subdivision_count(),
                    active_terms: energy.active_terms,
                    mu: state.mu,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    theta: state.params.theta().clone(),
                });
                if inner > self.config.max_inner_iterations {
                    return Err(SolverError::InnerLoopStall {
                        iterations: inner,
                        mu: state.mu,
                    });
                }
            }
            state.mu *= self.config.barrier.gamma;
            if let Some(decay) = self.config.eps_d_decay {
                eps_d *= decay;
            }
        }
        Ok((state.params, state.log))
    }
}

/// One-call entry point.
pub fn solve(
    problem: &Problem,
    config: &SolverConfig,
) -> Result<(TrajectoryParams, ConvergenceLog), SolverError> {
    Solver::new(problem, config)?.solve()
}
