//! Independent verification tools and the exchange-method baseline.
//!
//! Nothing here shares the solver's conservative machinery: the feasibility
//! audit samples the temporal domain exhaustively with no pruning, the
//! Lipschitz ground truth is a plain finite-difference speed scan, and the
//! exchange baseline optimizes against sampled constraint instants with no
//! safety check, no subdivision, and no safety margin. That separation is
//! what makes the contrast experiments about constraint sampling alone.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::{
    enumerate_pairs, modulate_hessian, pair_distance_at, pair_distance_gradient_at,
    ConstraintError, Counterpart, PairDef,
};
use crate::kinematics::KinematicChain;
use crate::problem::{DirectionOrder, EvalContext, Problem, SolverConfig};
use crate::solver::{ConvergenceLog, IterationRecord};
use crate::trajectory::{ExtractionMatrices, TrajectoryParams};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Trajectory(#[from] crate::trajectory::TrajectoryError),
    #[error(transparent)]
    Config(#[from] crate::problem::ConfigError),
    #[error("audit step must be positive, got {0}")]
    BadStep(f64),
    #[error("exchange baseline: initial trajectory violates a sampled instant")]
    ExchangeBadInitial,
    #[error("exchange baseline: NLP diverged ({0})")]
    ExchangeDivergence(String),
    #[error(
        "exchange baseline: sampled instants still violated after {rounds} rounds \
         ({remaining} pairs in violation)"
    )]
    ExchangeInfeasible {
        rounds: usize,
        remaining: usize,
        /// Last iterate, so callers can still audit and probe it.
        params: Box<TrajectoryParams>,
        log: Box<ConvergenceLog>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Infeasible,
}

/// One clearance violation found by the dense audit.
#[derive(Debug, Clone)]
pub struct AuditViolation {
    pub pair: usize,
    pub link: usize,
    pub prim: usize,
    pub counterpart: Counterpart,
    pub t: f64,
    pub distance: f64,
}

/// Result of the exhaustive dense-sampling audit.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub sampled_instants: usize,
    pub min_distance: f64,
    pub violations: Vec<AuditViolation>,
    pub verdict: Verdict,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "verdict: {}",
            match self.verdict {
                Verdict::Feasible => "feasible",
                Verdict::Infeasible => "infeasible",
            }
        )?;
        writeln!(f, "sampled_instants: {}", self.sampled_instants)?;
        writeln!(f, "min_distance: {}", self.min_distance)?;
        writeln!(f, "violations: {}", self.violations.len())?;
        for v in &self.violations {
            let counterpart = match v.counterpart {
                Counterpart::Obstacle(k) => format!("obstacle {k}"),
                Counterpart::Moving { link, prim } => format!("link {link} prim {prim}"),
            };
            writeln!(
                f,
                "violation: pair={} link={} prim={} vs {} t={} distance={}",
                v.pair, v.link, v.prim, counterpart, v.t, v.distance
            )?;
        }
        Ok(())
    }
}

/// Evaluates every constrained pair at `t = 0, dt, 2dt, ..., T` (with `T`
/// itself always included) and records each instant with distance <= d0.
/// Exhaustive: no pruning, no Lipschitz reasoning.
pub fn verify_feasibility(
    problem: &Problem,
    params: &TrajectoryParams,
    d0: f64,
    dt: f64,
) -> Result<FeasibilityReport, OracleError> {
    if !(dt > 0.0) {
        return Err(OracleError::BadStep(dt));
    }
    let matrices = ExtractionMatrices::new(params.spec(), params.start())?;
    let barrier = crate::barrier::BarrierSpec {
        d0,
        ..crate::barrier::BarrierSpec::default()
    };
    let ctx = EvalContext {
        chain: &problem.chain,
        obstacles: &problem.obstacles,
        objective: problem.objective.as_ref(),
        matrices: &matrices,
        barrier: &barrier,
    };
    let pairs = enumerate_pairs(problem);
    let horizon = params.horizon();
    let steps = (horizon / dt).floor() as usize;
    let mut instants: Vec<f64> = (0..=steps).map(|i| (i as f64 * dt).min(horizon)).collect();
    if *instants.last().unwrap() < horizon {
        instants.push(horizon);
    }

    // Parallel over instants, order-preserving collect, sequential fold.
    let sampler = crate::trajectory::TrajectorySampler::new(params, &matrices);
    let per_instant: Vec<Result<(f64, Vec<AuditViolation>), ConstraintError>> = instants
        .par_iter()
        .map(|&t| {
            let theta = sampler.eval(t)?;
            let fk = problem.chain.forward_kinematics(&theta)?;
            let mut min_d = f64::INFINITY;
            let mut violations = Vec::new();
            for (pair_idx, def) in pairs.iter().enumerate() {
                let d = crate::constraints::pair_distance_with_fk(&ctx, def, &fk).distance;
                if d < min_d {
                    min_d = d;
                }
                if d <= d0 {
                    violations.push(AuditViolation {
                        pair: pair_idx,
                        link: def.link,
                        prim: def.prim,
                        counterpart: def.counterpart,
                        t,
                        distance: d,
                    });
                }
            }
            Ok((min_d, violations))
        })
        .collect();

    let mut min_distance = f64::INFINITY;
    let mut violations = Vec::new();
    for item in per_instant {
        let (min_d, mut v) = item?;
        min_distance = min_distance.min(min_d);
        violations.append(&mut v);
    }
    let verdict = if violations.is_empty() {
        Verdict::Feasible
    } else {
        Verdict::Infeasible
    };
    Ok(FeasibilityReport {
        sampled_instants: instants.len(),
        min_distance,
        violations,
        verdict,
    })
}

/// Max finite-difference speed of any vertex of `(link, primitive)` along a
/// joint path, sampled at step `dt` over `[t0, t1]`.
pub fn max_speed_along<F: Fn(f64) -> DVector<f64>>(
    chain: &KinematicChain,
    link: usize,
    primitive: usize,
    path: F,
    span: (f64, f64),
    dt: f64,
) -> f64 {
    let prim = &chain.links()[link][primitive];
    let mut max_speed: f64 = 0.0;
    let mut t = span.0;
    let mut fk_prev = chain
        .forward_kinematics(&path(t))
        .expect("path dimension matches chain");
    while t + dt <= span.1 + 1e-12 {
        let fk_next = chain
            .forward_kinematics(&path(t + dt))
            .expect("path dimension matches chain");
        for v in prim.vertices() {
            let a = fk_prev[link] * v;
            let b = fk_next[link] * v;
            max_speed = max_speed.max((b - a).norm() / dt);
        }
        fk_prev = fk_next;
        t += dt;
    }
    max_speed
}

/// Fold a line into `[lo, hi]` by reflection; preserves |slope|.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * w);
    if y < w {
        lo + y
    } else {
        lo + 2.0 * w - y
    }
}

/// Per-trial maximum sampled speeds over random unit-rate joint paths
/// (linear with reflection at the limits), one second long each.
pub fn lipschitz_trial_maxima(
    chain: &KinematicChain,
    link: usize,
    primitive: usize,
    trials: usize,
    dt: f64,
    seed: u64,
) -> Vec<f64> {
    assert!(trials >= 1);
    let joints = chain.joint_count();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = StdRng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9e37_79b9));
            let start = DVector::from_fn(joints, |k, _| {
                rng.random_range(chain.joint_lower()[k]..chain.joint_upper()[k])
            });
            let rate = DVector::from_fn(joints, |_, _| rng.random_range(-1.0..1.0));
            max_speed_along(
                chain,
                link,
                primitive,
                |t| {
                    DVector::from_fn(joints, |k, _| {
                        reflect(
                            start[k] + rate[k] * t,
                            chain.joint_lower()[k],
                            chain.joint_upper()[k],
                        )
                    })
                },
                (0.0, 1.0),
                dt,
            )
        })
        .collect()
}

/// Ground-truth tightest Lipschitz estimate: the max sampled speed over
/// random unit-rate trajectories.
pub fn lipschitz_ground_truth(
    chain: &KinematicChain,
    link: usize,
    primitive: usize,
    trials: usize,
    dt: f64,
    seed: u64,
) -> f64 {
    lipschitz_trial_maxima(chain, link, primitive, trials, dt, seed)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Configuration of the exchange baseline.
#[derive(Debug, Clone)]
pub struct ExchangeConfig {
    /// Temporal scan resolution for constraint detection.
    pub epsilon: f64,
    /// Rounds of scan + NLP alternation before giving up.
    pub max_rounds: usize,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_rounds: 100,
        }
    }
}

/// A sampled constraint instant.
#[derive(Debug, Clone, Copy)]
struct Instantseed {
    pair: usize,
    t: f64,
}

/// The exchange method: scan the temporal domain at resolution `epsilon`,
/// insert the deepest violation per pair into the instance set, and solve
/// the sampled-constraint NLP with the same barrier-Newton machinery —
/// without safety check, subdivision, or safety margin. Constraints are only
/// ever inserted, never removed. Physical joint limits are enforced, but the
/// unit-rate barrier is not: the optimizer may accelerate arbitrarily
/// between sampled instants, which is exactly the tunneling failure mode
/// the feasible method removes.
pub fn exchange_solve(
    problem: &Problem,
    config: &SolverConfig,
    exchange: &ExchangeConfig,
) -> Result<(TrajectoryParams, ConvergenceLog), OracleError> {
    config.validate()?;
    assert!(exchange.epsilon > 0.0);
    let matrices = ExtractionMatrices::new(&config.trajectory, &problem.start)?;
    let ctx = EvalContext {
        chain: &problem.chain,
        obstacles: &problem.obstacles,
        objective: problem.objective.as_ref(),
        matrices: &matrices,
        barrier: &config.barrier,
    };
    let pairs = enumerate_pairs(problem);
    let initial = TrajectoryParams::constant(config.trajectory, problem.start.clone())?;
    let mut params = initial.clone();
    let mut instants: Vec<Instantseed> = Vec::new();
    let mut log = ConvergenceLog::default();
    let started = Instant::now();
    let mut iteration = 0usize;

    let horizon = initial.horizon();
    let steps = (horizon / exchange.epsilon).floor() as usize;
    let grid: Vec<f64> = {
        let mut g: Vec<f64> = (0..=steps)
            .map(|i| (i as f64 * exchange.epsilon).min(horizon))
            .collect();
        if *g.last().unwrap() < horizon {
            g.push(horizon);
        }
        g
    };

    for round in 0..exchange.max_rounds {
        // (a) scan: deepest violation per pair.
        let mut new_instants = Vec::new();
        for (pair_idx, def) in pairs.iter().enumerate() {
            let per_t: Vec<Result<f64, ConstraintError>> = grid
                .par_iter()
                .map(|&t| Ok(pair_distance_at(&ctx, def, &params, t)?.distance))
                .collect();
            let mut deepest: Option<(f64, f64)> = None; // (distance, t)
            for (i, d) in per_t.into_iter().enumerate() {
                let d = d?;
                if d < ctx.barrier.d0 {
                    let t = grid[i];
                    if deepest.map_or(true, |(dd, _)| d < dd) {
                        deepest = Some((d, t));
                    }
                }
            }
            if let Some((_, t)) = deepest {
                if !instants
                    .iter()
                    .any(|i| i.pair == pair_idx && i.t.to_bits() == t.to_bits())
                {
                    new_instants.push(Instantseed { pair: pair_idx, t });
                }
            }
        }

        if new_instants.is_empty() && round > 0 {
            return Ok((params, log));
        }
        instants.extend(new_instants);
        instants.sort_by(|a, b| a.pair.cmp(&b.pair).then(a.t.partial_cmp(&b.t).unwrap()));

        // (b) solve the sampled NLP from the current point if it is interior
        // for the grown instance set, else fall back to the initial point.
        let start_value = instants_value(&ctx, &pairs, &instants, &params, config.barrier.mu)?;
        let mut theta = if start_value.is_finite() {
            params.clone()
        } else {
            let fallback = instants_value(&ctx, &pairs, &instants, &initial, config.barrier.mu)?;
            if !fallback.is_finite() {
                return Err(OracleError::ExchangeBadInitial);
            }
            initial.clone()
        };
        nlp_solve(
            &ctx,
            &pairs,
            &instants,
            config,
            &mut theta,
            &mut log,
            &mut iteration,
            &started,
        )?;
        params = theta;
    }

    // Final scan to report remaining violations.
    let mut remaining = 0;
    for def in &pairs {
        let mut violated = false;
        for &t in &grid {
            if pair_distance_at(&ctx, def, &params, t)?.distance < ctx.barrier.d0 {
                violated = true;
                break;
            }
        }
        if violated {
            remaining += 1;
        }
    }
    if remaining == 0 {
        return Ok((params, log));
    }
    Err(OracleError::ExchangeInfeasible {
        rounds: exchange.max_rounds,
        remaining,
        params: Box::new(params),
        log: Box::new(log),
    })
}

fn instants_value(
    ctx: &EvalContext<'_>,
    pairs: &[PairDef],
    instants: &[Instantseed],
    params: &TrajectoryParams,
    mu: f64,
) -> Result<f64, OracleError> {
    let objective = ctx
        .objective
        .evaluate(ctx.chain, params, ctx.matrices, false)
        .map_err(ConstraintError::from)?;
    let limits =
        crate::trajectory::position_limit_barrier(params, ctx.chain, ctx.matrices, ctx.barrier, false);
    if !limits.value.is_finite() {
        return Ok(f64::INFINITY);
    }
    let mut value = objective.value + mu * limits.value;
    for inst in instants {
        let d = pair_distance_at(ctx, &pairs[inst.pair], params, inst.t)?.distance;
        value += mu * crate::barrier::penalty(d - ctx.barrier.d0, ctx.barrier).value;
    }
    Ok(value)
}

struct InstantEnergy {
    value: f64,
    gradient: Option<DVector<f64>>,
    hessian: Option<DMatrix<f64>>,
}

fn instants_energy(
    ctx: &EvalContext<'_>,
    pairs: &[PairDef],
    instants: &[Instantseed],
    params: &TrajectoryParams,
    mu: f64,
    order: DirectionOrder,
) -> Result<InstantEnergy, OracleError> {
    let want_hessian = order == DirectionOrder::Second;
    let objective = ctx
        .objective
        .evaluate(ctx.chain, params, ctx.matrices, want_hessian)
        .map_err(ConstraintError::from)?;
    let limits = crate::trajectory::position_limit_barrier(
        params,
        ctx.chain,
        ctx.matrices,
        ctx.barrier,
        want_hessian,
    );
    if !limits.value.is_finite() {
        return Ok(InstantEnergy {
            value: f64::INFINITY,
            gradient: None,
            hessian: None,
        });
    }
    let dim = params.theta().len();
    let mut value = objective.value + mu * limits.value;
    let mut gradient = objective.gradient;
    if let Some(g) = &limits.gradient {
        gradient.axpy(mu, g, 1.0);
    }
    let mut hessian = if want_hessian {
        let mut h = objective
            .hessian
            .unwrap_or_else(|| DMatrix::zeros(dim, dim));
        if let Some(lh) = &limits.hessian {
            h += lh * mu;
        }
        Some(h)
    } else {
        None
    };
    for inst in instants {
        let (d, g) = pair_distance_gradient_at(ctx, &pairs[inst.pair], params, inst.t)?;
        let p = crate::barrier::penalty(d - ctx.barrier.d0, ctx.barrier);
        if !p.is_finite() {
            return Ok(InstantEnergy {
                value: f64::INFINITY,
                gradient: None,
                hessian: None,
            });
        }
        if p.value == 0.0 && p.dx == 0.0 {
            continue;
        }
        value += mu * p.value;
        gradient.axpy(mu * p.dx, &g, 1.0);
        if let Some(h) = hessian.as_mut() {
            h.ger(mu * p.dxx, &g, &g, 1.0);
        }
    }
    let hessian = hessian.map(|h| modulate_hessian(&h));
    Ok(InstantEnergy {
        value,
        gradient: Some(gradient),
        hessian,
    })
}

/// Barrier-Newton with backtracking on the sampled instants. Same numerics
/// as the main solver minus all conservative machinery.
#[allow(clippy::too_many_arguments)]
fn nlp_solve(
    ctx: &EvalContext<'_>,
    pairs: &[PairDef],
    instants: &[Instantseed],
    config: &SolverConfig,
    params: &mut TrajectoryParams,
    log: &mut ConvergenceLog,
    iteration: &mut usize,
    started: &Instant,
) -> Result<(), OracleError> {
    let mut mu = config.barrier.mu;
    while mu > config.barrier.eps_mu {
        let mut inner = 0usize;
        loop {
            let energy = instants_energy(ctx, pairs, instants, params, mu, config.order)?;
            if !energy.value.is_finite() {
                return Err(OracleError::ExchangeDivergence(
                    "energy not finite at iterate".into(),
                ));
            }
            let gradient = energy.gradient.as_ref().unwrap();
            if gradient.amax() <= config.barrier.eps_d {
                break;
            }
            let direction = match config.order {
                DirectionOrder::First => -gradient,
                DirectionOrder::Second => {
                    let h = energy.hessian.as_ref().unwrap();
                    h.clone()
                        .cholesky()
                        .expect("modulated Hessian is positive definite")
                        .solve(&(-gradient))
                }
            };
            let slope = direction.dot(gradient);
            if slope >= 0.0 {
                return Err(OracleError::ExchangeDivergence("non-descent direction".into()));
            }
            let mut alpha = config.alpha0;
            let mut accepted = false;
            for _ in 0..200 {
                let trial = params.stepped(&direction, alpha);
                let value = instants_value(ctx, pairs, instants, &trial, mu)?;
                if value <= energy.value + config.barrier.c_wolfe * alpha * slope {
                    *params = trial;
                    accepted = true;
                    break;
                }
                alpha *= config.barrier.gamma;
            }
            if !accepted {
                return Err(OracleError::ExchangeDivergence(
                    "line search failed to satisfy sufficient decrease".into(),
                ));
            }
            *iteration += 1;
            inner += 1;
            let post = instants_energy(ctx, pairs, instants, params, mu, DirectionOrder::First)?;
            log.records.push(IterationRecord {
                iteration: *iteration,
                energy: post.value,
                grad_inf: post.gradient.as_ref().map_or(f64::NAN, |g| g.amax()),
                alpha,
                subdivision_count: 0,
                active_terms: instants.len(),
                mu,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                theta: params.theta().clone(),
            });
            if inner > config.max_inner_iterations {
                return Err(OracleError::ExchangeDivergence(format!(
                    "inner loop exceeded {inner} iterations at mu = {mu}"
                )));
            }
        }
        mu *= config.barrier.gamma;
    }
    Ok(())
}


#[cfg(test)]
mod motion_bound_tests {
    use super::*;
    use crate::geometry::Primitive;
    use crate::kinematics::{Joint, JointKind};
    use nalgebra::{Isometry3, Point3, Vector3};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Self-collision form of the motion bound: the distance between two
    /// moving primitives changes no faster than the sum of their Lipschitz
    /// constants.
    #[test]
    fn self_pair_distance_rate_bounded_by_summed_constants() {
        let hinge = |x: f64, parent| Joint {
            kind: JointKind::Hinge,
            axis: Vector3::z_axis(),
            parent_offset: Isometry3::translation(x, 0.0, 0.0),
            parent,
        };
        let chain = KinematicChain::new(
            vec![hinge(0.0, None), hinge(1.0, Some(0)), hinge(1.0, Some(1))],
            vec![
                vec![Primitive::segment(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0))
                    .unwrap()],
                vec![Primitive::point(Point3::new(1.0, 0.0, 0.0))],
                vec![Primitive::segment(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0))
                    .unwrap()],
            ],
            DVector::from_element(3, -3.2),
            DVector::from_element(3, 3.2),
        )
        .unwrap();
        let la = chain.lipschitz_bound(0, 0).unwrap();
        let lb = chain.lipschitz_bound(2, 0).unwrap();
        let sum = la + lb;

        let prim_a = &chain.links()[0][0];
        let prim_b = &chain.links()[2][0];
        let mut rng = StdRng::seed_from_u64(0x5e1f);
        let dt = 1e-3;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let start = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let rate = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let mut prev: Option<f64> = None;
            for i in 0..=200 {
                let t = i as f64 * dt;
                let fk = chain.forward_kinematics(&(&start + &rate * t)).unwrap();
                let d = crate::geometry::distance(prim_a, &fk[0], prim_b, &fk[2]).distance;
                if let Some(p) = prev {
                    let speed = (d - p).abs() / dt;
                    worst = worst.max(speed);
                    assert!(
                        speed <= sum + 1e-6,
                        "distance rate {speed} exceeds summed bound {sum}"
                    );
                }
                prev = Some(d);
            }
        }
        assert!(worst > 0.1, "the scan must actually move: worst {worst}");
    }

    /// Passing the safety check implies passing the dense audit — the
    /// forward direction of the guarantee — on random safe states.
    #[test]
    fn safety_check_pass_implies_dense_audit_pass() {
        use crate::constraints::init_intervals;
        use crate::problem::{CompositeObjective, Obstacle};
        use std::sync::Arc;

        let hinge = |x: f64, parent| Joint {
            kind: JointKind::Hinge,
            axis: Vector3::z_axis(),
            parent_offset: Isometry3::translation(x, 0.0, 0.0),
            parent,
        };
        let chain = KinematicChain::new(
            vec![hinge(0.0, None), hinge(1.0, Some(0))],
            vec![
                vec![Primitive::point(Point3::new(1.0, 0.0, 0.0))],
                vec![Primitive::point(Point3::new(1.0, 0.0, 0.0))],
            ],
            DVector::from_element(2, -3.2),
            DVector::from_element(2, 3.2),
        )
        .unwrap();
        let problem = Problem {
            chain,
            obstacles: vec![Obstacle {
                primitive: Primitive::point(Point3::new(1.5, 1.0, 0.0))
                    .with_sweep(0.2)
                    .unwrap(),
                pose: Isometry3::identity(),
            }],
            objective: Arc::new(CompositeObjective::default()),
            start: DVector::zeros(2),
            self_collision: false,
            include_adjacent_self_pairs: false,
        };
        let config = SolverConfig::default();
        let matrices = ExtractionMatrices::new(&config.trajectory, &problem.start).unwrap();
        let ctx = EvalContext {
            chain: &problem.chain,
            obstacles: &problem.obstacles,
            objective: problem.objective.as_ref(),
            matrices: &matrices,
            barrier: &config.barrier,
        };
        let base = TrajectoryParams::constant(config.trajectory, problem.start.clone()).unwrap();
        let mut rng = StdRng::seed_from_u64(0xA0D1);
        let mut safe_states = 0;
        for _ in 0..200 {
            let theta = DVector::from_fn(base.theta().len(), |i, _| {
                base.theta()[i] + rng.random_range(-0.06..0.06)
            });
            let params = base.with_theta(theta).unwrap();
            // Rates must be within the normalization for the bound to hold.
            let limits = crate::trajectory::limit_barrier(
                &params,
                &problem.chain,
                &matrices,
                &config.barrier,
                false,
            );
            if !limits.value.is_finite() {
                continue;
            }
            // A fine initial partition keeps the conservative margin small
            // enough for safe draws to exist this close to the obstacle.
            let set = init_intervals(&ctx, &problem, &params, 64).unwrap();
            if set.safety_check(&ctx, &params).unwrap().is_some() {
                continue;
            }
            safe_states += 1;
            let report =
                verify_feasibility(&problem, &params, config.barrier.d0, 1e-3).unwrap();
            assert!(
                report.violations.is_empty(),
                "safety-check pass must imply dense feasibility: {report}"
            );
        }
        assert!(safe_states > 20, "too few safe draws: {safe_states}");
    }
}
