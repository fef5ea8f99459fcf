//! The semi-infinite constraint set: interval leaves, broad-phase pruning,
//! energy assembly, the conservative safety check, and midpoint subdivision.
//!
//! Every (moving primitive, counterpart) pair carries its own disjoint
//! partition of `[0, T]` into dyadic intervals. One interval is one surrogate
//! constraint, evaluated at the interval midpoint and weighted by the
//! interval length so the penalty sum approximates the integral penalty as a
//! Riemann sum. The safety check compares each midpoint distance against
//! `d0 + psi(len)` with `psi(x) = L1*x/2 + L2*x^eta`; passing it certifies
//! the entire interval by the Lipschitz motion bound.

mod bvh;

pub use bvh::STBvh;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{self, Aabb, DistanceResult};
use crate::kinematics::ChainError;
use crate::problem::{CostError, DirectionOrder, EvalContext, Obstacle, Problem};
use crate::trajectory::{limit_barrier, TrajectoryError, TrajectoryParams};

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("leaf not found: pair {pair} interval [{t0}, {t1}]")]
    LeafNotFound { pair: usize, t0: f64, t1: f64 },
    #[error("pair {0} is not a self-collision pair")]
    NotSelfPair(usize),
    #[error("partition does not cover the same span")]
    SpanMismatch,
}

/// What a moving primitive is constrained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counterpart {
    /// Index into the obstacle list.
    Obstacle(usize),
    /// Another moving primitive (self collision).
    Moving { link: usize, prim: usize },
}

/// One constrained pair with its conservative motion constants.
#[derive(Debug, Clone)]
pub struct PairDef {
    pub link: usize,
    pub prim: usize,
    pub counterpart: Counterpart,
    lipschitz_moving: f64,
    lipschitz_counterpart: f64,
}

impl PairDef {
    /// Combined bound on |d dist/dt|: the moving side's constant, plus the
    /// counterpart's when it moves too.
    pub fn lipschitz_sum(&self) -> f64 {
        self.lipschitz_moving + self.lipschitz_counterpart
    }

    pub fn is_self_pair(&self) -> bool {
        matches!(self.counterpart, Counterpart::Moving { .. })
    }
}

/// One surrogate constraint: a pair and a time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalLeaf {
    pub pair: usize,
    pub t0: f64,
    pub t1: f64,
}

impl IntervalLeaf {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t0 + self.t1)
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// A safety-check failure: the first leaf whose midpoint clearance does not
/// cover the conservative margin.
#[derive(Debug, Clone)]
pub struct SafetyViolation {
    pub leaf: IntervalLeaf,
    pub distance: f64,
    pub threshold: f64,
}

/// Assembled energy. The value may be `+inf` (a valid, rejectable state); the
/// gradient and Hessian are only present when the value is finite.
pub struct Energy {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    /// Eigenvalue-clamped positive definite curvature, when second order was
    /// requested and the value is finite.
    pub hessian: Option<DMatrix<f64>>,
    pub active_terms: usize,
}

impl Energy {
    fn infinite() -> Self {
        Energy {
            value: f64::INFINITY,
            gradient: None,
            hessian: None,
            active_terms: 0,
        }
    }
}

/// Eigenvalue clamp bounds for the modulated Hessian.
pub const BETA_LOWER: f64 = 1e-6;
pub const BETA_UPPER: f64 = 1e6;

/// Symmetric eigenvalue clamping into `[BETA_LOWER, BETA_UPPER]`.
pub fn modulate_hessian(h: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.clamp(BETA_LOWER, BETA_UPPER));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Enumerates constrained pairs in deterministic order: obstacle pairs
/// link-major, then self pairs lexicographically. Self pairs skip same-link
/// combinations always, and joint-sharing links unless requested.
pub fn enumerate_pairs(problem: &Problem) -> Vec<PairDef> {
    let chain = &problem.chain;
    let table = chain.lipschitz_table();
    let mut pairs = Vec::new();
    for link in 0..chain.joint_count() {
        for prim in 0..chain.links()[link].len() {
            for obstacle in 0..problem.obstacles.len() {
                pairs.push(PairDef {
                    link,
                    prim,
                    counterpart: Counterpart::Obstacle(obstacle),
                    lipschitz_moving: table.get(link, prim),
                    lipschitz_counterpart: 0.0,
                });
            }
        }
    }
    if problem.self_collision {
        for link_a in 0..chain.joint_count() {
            for link_b in link_a + 1..chain.joint_count() {
                let adjacent = chain.adjacent_links(link_a, link_b);
                if adjacent && !problem.include_adjacent_self_pairs {
                    continue;
                }
                for prim_a in 0..chain.links()[link_a].len() {
                    for prim_b in 0..chain.links()[link_b].len() {
                        pairs.push(PairDef {
                            link: link_a,
                            prim: prim_a,
                            counterpart: Counterpart::Moving {
                                link: link_b,
                                prim: prim_b,
                            },
                            lipschitz_moving: table.get(link_a, prim_a),
                            lipschitz_counterpart: table.get(link_b, prim_b),
                        });
                    }
                }
            }
        }
    }
    pairs
}

/// The constraint set: pairs, their interval partitions, and the BVH.
pub struct ConstraintSet {
    pairs: Vec<PairDef>,
    partitions: Vec<Vec<(f64, f64)>>,
    bvh: STBvh,
    subdivision_count: u64,
    horizon: f64,
}

/// Uniform initial partition of `[0, T]` per candidate pair.
pub fn init_intervals(
    ctx: &EvalContext<'_>,
    problem: &Problem,
    params: &TrajectoryParams,
    initial_splits: usize,
) -> Result<ConstraintSet, ConstraintError> {
    assert!(initial_splits >= 1);
    let pairs = enumerate_pairs(problem);
    let horizon = params.horizon();
    let partition: Vec<(f64, f64)> = (0..initial_splits)
        .map(|i| {
            (
                i as f64 * horizon / initial_splits as f64,
                (i + 1) as f64 * horizon / initial_splits as f64,
            )
        })
        .collect();
    let partitions = vec![partition; pairs.len()];

    let mut set = ConstraintSet {
        pairs,
        partitions,
        bvh: STBvh::build(0, &[]),
        subdivision_count: 0,
        horizon,
    };

    let mut leaves = Vec::new();
    for (pair_idx, partition) in set.partitions.iter().enumerate() {
        for &(t0, t1) in partition {
            let leaf = IntervalLeaf {
                pair: pair_idx,
                t0,
                t1,
            };
            let aabb = set.leaf_aabb(ctx, params, &leaf)?;
            leaves.push((pair_idx, t0, t1, aabb));
        }
    }
    set.bvh = STBvh::build(set.pairs.len(), &leaves);
    Ok(set)
}

impl ConstraintSet {
    pub fn pairs(&self) -> &[PairDef] {
        &self.pairs
    }

    pub fn partition(&self, pair: usize) -> &[(f64, f64)] {
        &self.partitions[pair]
    }

    pub fn subdivision_count(&self) -> u64 {
        self.subdivision_count
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn leaf_count(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    /// All leaves in deterministic (pair, t0) order.
    pub fn leaves(&self) -> Vec<IntervalLeaf> {
        let mut out = Vec::with_capacity(self.leaf_count());
        for (pair, partition) in self.partitions.iter().enumerate() {
            for &(t0, t1) in partition {
                out.push(IntervalLeaf { pair, t0, t1 });
            }
        }
        out
    }

    /// World box of a leaf: the moving primitive at the interval midpoint,
    /// inflated by its Lipschitz travel radius over the half-interval. For
    /// self pairs the box covers both primitives.
    fn leaf_aabb(
        &self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
        leaf: &IntervalLeaf,
    ) -> Result<Aabb, ConstraintError> {
        let pair = &self.pairs[leaf.pair];
        let theta = params.eval(ctx.matrices, leaf.midpoint())?;
        let fk = ctx.chain.forward_kinematics(&theta)?;
        let half = 0.5 * leaf.span();
        let mut aabb = ctx.chain.links()[pair.link][pair.prim].world_aabb(&fk[pair.link]);
        aabb.inflate(pair.lipschitz_moving * half);
        if let Counterpart::Moving { link, prim } = pair.counterpart {
            let mut other = ctx.chain.links()[link][prim].world_aabb(&fk[link]);
            other.inflate(pair.lipschitz_counterpart * half);
            aabb = aabb.union(&other);
        }
        Ok(aabb)
    }

    fn refit(
        &mut self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
    ) -> Result<(), ConstraintError> {
        // Compute leaf boxes first so the closure below stays infallible.
        let leaves = self.leaves();
        let boxes: Vec<Aabb> = leaves
            .iter()
            .map(|leaf| self.leaf_aabb(ctx, params, leaf))
            .collect::<Result<_, _>>()?;
        let mut lookup = std::collections::HashMap::with_capacity(leaves.len());
        for (leaf, aabb) in leaves.iter().zip(&boxes) {
            lookup.insert((leaf.pair, leaf.t0.to_bits()), *aabb);
        }
        self.bvh.refit(&mut |pair, t0, _| lookup[&(pair, t0.to_bits())]);
        Ok(())
    }

    /// Conservative superset of the leaves whose midpoint distance could be
    /// below `x0 + d0`: broad-phase pruning with Lipschitz-inflated boxes.
    pub fn active_terms(
        &mut self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
    ) -> Result<Vec<IntervalLeaf>, ConstraintError> {
        self.refit(ctx, params)?;
        let margin = ctx.barrier.x0 + ctx.barrier.d0;
        let mut hits: Vec<IntervalLeaf> = Vec::new();
        let mut scratch = Vec::new();
        for (k, obstacle) in ctx.obstacles.iter().enumerate() {
            let target = obstacle.aabb();
            scratch.clear();
            self.bvh.query(&target, margin, &mut scratch);
            for &(pair, t0, t1) in &scratch {
                if self.pairs[pair].counterpart == Counterpart::Obstacle(k) {
                    hits.push(IntervalLeaf { pair, t0, t1 });
                }
            }
        }
        // Self pairs: both sides move, so compare their per-side boxes at the
        // midpoint, each inflated by its own travel radius.
        for (pair_idx, pair) in self.pairs.iter().enumerate() {
            let Counterpart::Moving { link, prim } = pair.counterpart else {
                continue;
            };
            for &(t0, t1) in &self.partitions[pair_idx] {
                let leaf = IntervalLeaf {
                    pair: pair_idx,
                    t0,
                    t1,
                };
                let theta = params.eval(ctx.matrices, leaf.midpoint())?;
                let fk = ctx.chain.forward_kinematics(&theta)?;
                let half = 0.5 * leaf.span();
                let mut a = ctx.chain.links()[pair.link][pair.prim].world_aabb(&fk[pair.link]);
                a.inflate(pair.lipschitz_moving * half);
                let mut b = ctx.chain.links()[link][prim].world_aabb(&fk[link]);
                b.inflate(pair.lipschitz_counterpart * half);
                if a.distance_to(&b) <= margin {
                    hits.push(leaf);
                }
            }
        }
        hits.sort_by(|a, b| a.pair.cmp(&b.pair).then(a.t0.partial_cmp(&b.t0).unwrap()));
        hits.dedup_by(|a, b| a.pair == b.pair && a.t0 == b.t0);
        Ok(hits)
    }

    /// Distance between the pair's shapes at time `t`.
    pub fn pair_distance(
        &self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
        pair: usize,
        t: f64,
    ) -> Result<DistanceResult, ConstraintError> {
        pair_distance_at(ctx, &self.pairs[pair], params, t)
    }

    fn pair_distance_gradient(
        &self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
        pair: usize,
        t: f64,
    ) -> Result<(f64, DVector<f64>), ConstraintError> {
        pair_distance_gradient_at(ctx, &self.pairs[pair], params, t)
    }

    /// The penalty energy of Riemann-weighted midpoint surrogates plus the
    /// objective and the conservative limit barriers.
    ///
    /// Term order is fixed (pair id, then t0), so the sum is bit-reproducible
    /// across runs and thread counts.
    pub fn assemble_energy(
        &mut self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
        mu: f64,
        order: DirectionOrder,
    ) -> Result<Energy, ConstraintError> {
        let want_hessian = order == DirectionOrder::Second;
        let objective = ctx
            .objective
            .evaluate(ctx.chain, params, ctx.matrices, want_hessian)?;
        if !objective.value.is_finite() {
            return Err(ConstraintError::Cost(CostError::NonFinite));
        }

        let limits = limit_barrier(params, ctx.chain, ctx.matrices, ctx.barrier, want_hessian);
        if !limits.value.is_finite() {
            return Ok(Energy::infinite());
        }

        let active = self.active_terms(ctx, params)?;
        let active_terms = active.len();

        struct Term {
            weight: f64,
            penalty: crate::barrier::Penalty,
            gradient: Option<DVector<f64>>,
        }

        // Parallel map in fixed order; the reduction below is sequential.
        let terms: Vec<Result<Term, ConstraintError>> = active
            .par_iter()
            .map(|leaf| {
                let x_probe = self
                    .pair_distance(ctx, params, leaf.pair, leaf.midpoint())?
                    .distance
                    - ctx.barrier.d0;
                if x_probe <= 0.0 {
                    return Ok(Term {
                        weight: leaf.span(),
                        penalty: crate::barrier::penalty(x_probe, ctx.barrier),
                        gradient: None,
                    });
                }
                if x_probe >= ctx.barrier.x0 {
                    // Conservatively activated but outside the support.
                    return Ok(Term {
                        weight: leaf.span(),
                        penalty: crate::barrier::penalty(x_probe, ctx.barrier),
                        gradient: None,
                    });
                }
                let (dist, grad) =
                    self.pair_distance_gradient(ctx, params, leaf.pair, leaf.midpoint())?;
                Ok(Term {
                    weight: leaf.span(),
                    penalty: crate::barrier::penalty(dist - ctx.barrier.d0, ctx.barrier),
                    gradient: Some(grad),
                })
            })
            .collect();

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

        for term in terms {
            let term = term?;
            if !term.penalty.is_finite() {
                return Ok(Energy::infinite());
            }
            if term.penalty.value == 0.0 && term.penalty.dx == 0.0 {
                continue;
            }
            let g = term
                .gradient
                .expect("in-support terms carry their gradient");
            value += mu * term.weight * term.penalty.value;
            gradient.axpy(mu * term.weight * term.penalty.dx, &g, 1.0);
            if let Some(h) = hessian.as_mut() {
                h.ger(mu * term.weight * term.penalty.dxx, &g, &g, 1.0);
            }
        }

        let hessian = hessian.map(|h| modulate_hessian(&h));
        Ok(Energy {
            value,
            gradient: Some(gradient),
            hessian,
            active_terms,
        })
    }

    /// Energy value alone, for line-search trial points: no gradients, no
    /// curvature. `+inf` is a valid result.
    pub fn energy_value(
        &mut self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
        mu: f64,
    ) -> Result<f64, ConstraintError> {
        let objective = ctx
            .objective
            .evaluate(ctx.chain, params, ctx.matrices, false)?;
        if !objective.value.is_finite() {
            return Err(ConstraintError::Cost(CostError::NonFinite));
        }
        let limits = limit_barrier(params, ctx.chain, ctx.matrices, ctx.barrier, false);
        if !limits.value.is_finite() {
            return Ok(f64::INFINITY);
        }
        let active = self.active_terms(ctx, params)?;
        let penalties: Vec<Result<f64, ConstraintError>> = active
            .par_iter()
            .map(|leaf| {
                let dist = self
                    .pair_distance(ctx, params, leaf.pair, leaf.midpoint())?
                    .distance;
                Ok(leaf.span() * crate::barrier::penalty(dist - ctx.barrier.d0, ctx.barrier).value)
            })
            .collect();
        let mut value = objective.value + mu * limits.value;
        for p in penalties {
            value += mu * p?;
        }
        Ok(value)
    }

    /// First leaf (pair id, then t0) whose midpoint clearance fails to cover
    /// the conservative margin `d0 + psi(span)`; `None` when all pass. All
    /// leaves are checked; the box test only skips narrow-phase work when it
    /// certifies the leaf safe.
    pub fn safety_check(
        &self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
    ) -> Result<Option<SafetyViolation>, ConstraintError> {
        self.scan_safety(ctx, params, true)
            .map(|mut v| v.drain(..).next())
    }

    /// All violating leaves, for up-front subdivision of the initial iterate.
    pub fn safety_violations(
        &self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
    ) -> Result<Vec<SafetyViolation>, ConstraintError> {
        self.scan_safety(ctx, params, false)
    }

    fn scan_safety(
        &self,
        ctx: &EvalContext<'_>,
        params: &TrajectoryParams,
        first_only: bool,
    ) -> Result<Vec<SafetyViolation>, ConstraintError> {
        let mut out = Vec::new();
        for (pair_idx, pair) in self.pairs.iter().enumerate() {
            for &(t0, t1) in &self.partitions[pair_idx] {
                let leaf = IntervalLeaf {
                    pair: pair_idx,
                    t0,
                    t1,
                };
                let threshold = ctx.barrier.d0 + ctx.barrier.psi(pair.lipschitz_sum(), leaf.span());
                let theta = params.eval(ctx.matrices, leaf.midpoint())?;
                let fk = ctx.chain.forward_kinematics(&theta)?;
                let moving = &ctx.chain.links()[pair.link][pair.prim];
                let moving_box = moving.world_aabb(&fk[pair.link]);
                let other_box = match pair.counterpart {
                    Counterpart::Obstacle(k) => ctx.obstacles[k].aabb(),
                    Counterpart::Moving { link, prim } => {
                        ctx.chain.links()[link][prim].world_aabb(&fk[link])
                    }
                };
                // Box distance lower-bounds the true distance; strictly
                // above the threshold means the leaf passes without a
                // narrow-phase query.
                if moving_box.distance_to(&other_box) > threshold {
                    continue;
                }
                let result = match pair.counterpart {
                    Counterpart::Obstacle(k) => geometry::distance(
                        moving,
                        &fk[pair.link],
                        &ctx.obstacles[k].primitive,
                        &ctx.obstacles[k].pose,
                    ),
                    Counterpart::Moving { link, prim } => geometry::distance(
                        moving,
                        &fk[pair.link],
                        &ctx.chain.links()[link][prim],
                        &fk[link],
                    ),
                };
                if result.distance <= threshold {
                    out.push(SafetyViolation {
                        leaf,
                        distance: result.distance,
                        threshold,
                    });
                    if first_only {
                        return Ok(out);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Midpoint split of one leaf. The BVH leaf is replaced by an internal
    /// node with the two half-interval children; no other leaf changes.
    pub fn subdivide(&mut self, leaf: &IntervalLeaf) -> Result<(), ConstraintError> {
        let partition = self
            .partitions
            .get_mut(leaf.pair)
            .ok_or(ConstraintError::LeafNotFound {
                pair: leaf.pair,
                t0: leaf.t0,
                t1: leaf.t1,
            })?;
        let idx = partition
            .iter()
            .position(|&(t0, t1)| t0 == leaf.t0 && t1 == leaf.t1)
            .ok_or(ConstraintError::LeafNotFound {
                pair: leaf.pair,
                t0: leaf.t0,
                t1: leaf.t1,
            })?;
        let mid = 0.5 * (leaf.t0 + leaf.t1);
        partition.splice(idx..=idx, [(leaf.t0, mid), (mid, leaf.t1)]);
        self.bvh.subdivide_leaf(leaf.pair, idx, mid);
        self.subdivision_count += 1;
        Ok(())
    }

    /// Refines a self pair's partition to the common refinement with
    /// `other`, by recursive midpoint splits only. Returns the resulting
    /// partition so the caller can mirror it onto the other primitive's
    /// bookkeeping.
    pub fn reconcile_self_pair(
        &mut self,
        pair: usize,
        other: &[(f64, f64)],
    ) -> Result<Vec<(f64, f64)>, ConstraintError> {
        if !self.pairs[pair].is_self_pair() {
            return Err(ConstraintError::NotSelfPair(pair));
        }
        let target = reconcile_partitions(&self.partitions[pair], other)?;
        // Apply through subdivide() so the BVH stays consistent.
        let boundaries: Vec<f64> = target.iter().map(|iv| iv.0).skip(1).collect();
        for &b in &boundaries {
            loop {
                let partition = &self.partitions[pair];
                if partition.iter().any(|&(t0, _)| t0 == b) {
                    break;
                }
                let host = partition
                    .iter()
                    .find(|&&(t0, t1)| t0 < b && b < t1)
                    .copied()
                    .ok_or(ConstraintError::SpanMismatch)?;
                self.subdivide(&IntervalLeaf {
                    pair,
                    t0: host.0,
                    t1: host.1,
                })?;
            }
        }
        Ok(self.partitions[pair].clone())
    }

    /// BVH leaf boxes in (pair, t0) order, for soundness checks.
    pub fn bvh_leaves(&self) -> Vec<(usize, f64, f64, Aabb)> {
        self.bvh.leaves()
    }

    #[cfg(test)]
    pub(crate) fn bvh(&self) -> &STBvh {
        &self.bvh
    }
}

/// Distance between a pair's shapes at time `t`.
pub fn pair_distance_at(
    ctx: &EvalContext<'_>,
    def: &PairDef,
    params: &TrajectoryParams,
    t: f64,
) -> Result<DistanceResult, ConstraintError> {
    let theta = params.eval(ctx.matrices, t)?;
    let fk = ctx.chain.forward_kinematics(&theta)?;
    let moving = &ctx.chain.links()[def.link][def.prim];
    let result = match def.counterpart {
        Counterpart::Obstacle(k) => {
            let obs: &Obstacle = &ctx.obstacles[k];
            geometry::distance(moving, &fk[def.link], &obs.primitive, &obs.pose)
        }
        Counterpart::Moving { link, prim } => geometry::distance(
            moving,
            &fk[def.link],
            &ctx.chain.links()[link][prim],
            &fk[link],
        ),
    };
    Ok(result)
}

/// Distance between a pair's shapes under precomputed forward kinematics.
pub fn pair_distance_with_fk(
    ctx: &EvalContext<'_>,
    def: &PairDef,
    fk: &[nalgebra::Isometry3<f64>],
) -> DistanceResult {
    let moving = &ctx.chain.links()[def.link][def.prim];
    match def.counterpart {
        Counterpart::Obstacle(k) => {
            let obs: &Obstacle = &ctx.obstacles[k];
            geometry::distance(moving, &fk[def.link], &obs.primitive, &obs.pose)
        }
        Counterpart::Moving { link, prim } => geometry::distance(
            moving,
            &fk[def.link],
            &ctx.chain.links()[link][prim],
            &fk[link],
        ),
    }
}

/// Distance and its gradient with respect to theta at time `t`, chained
/// distance -> world vertices -> point Jacobian -> basis gradient.
pub fn pair_distance_gradient_at(
    ctx: &EvalContext<'_>,
    def: &PairDef,
    params: &TrajectoryParams,
    t: f64,
) -> Result<(f64, DVector<f64>), ConstraintError> {
    let theta = params.eval(ctx.matrices, t)?;
    let fk = ctx.chain.forward_kinematics(&theta)?;
    let moving = &ctx.chain.links()[def.link][def.prim];
    let result = match def.counterpart {
        Counterpart::Obstacle(k) => {
            let obs = &ctx.obstacles[k];
            geometry::distance(moving, &fk[def.link], &obs.primitive, &obs.pose)
        }
        Counterpart::Moving { link, prim } => geometry::distance(
            moving,
            &fk[def.link],
            &ctx.chain.links()[link][prim],
            &fk[link],
        ),
    };

    let joints = ctx.chain.joint_count();
    let mut per_joint = DVector::zeros(joints);
    for (vi, g) in result.grad_vertices_a.iter().enumerate() {
        if g.norm_squared() == 0.0 {
            continue;
        }
        let jac = ctx
            .chain
            .point_jacobian_with_fk(&fk, def.link, &moving.vertices()[vi])?;
        per_joint += jac.transpose() * g;
    }
    if let Counterpart::Moving { link, prim } = def.counterpart {
        let other = &ctx.chain.links()[link][prim];
        for (vi, g) in result.grad_vertices_b.iter().enumerate() {
            if g.norm_squared() == 0.0 {
                continue;
            }
            let jac = ctx
                .chain
                .point_jacobian_with_fk(&fk, link, &other.vertices()[vi])?;
            per_joint += jac.transpose() * g;
        }
    }
    let basis = params.basis_gradient(ctx.matrices, t)?;
    Ok((result.distance, basis.transpose() * per_joint))
}

/// Common refinement of two dyadic partitions of the same span, produced by
/// recursively midpoint-splitting whichever interval is coarser.
pub fn reconcile_partitions(
    a: &[(f64, f64)],
    b: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>, ConstraintError> {
    if a.is_empty() || b.is_empty() {
        return Err(ConstraintError::SpanMismatch);
    }
    if a.first().unwrap().0 != b.first().unwrap().0 || a.last().unwrap().1 != b.last().unwrap().1 {
        return Err(ConstraintError::SpanMismatch);
    }
    let mut qa: std::collections::VecDeque<(f64, f64)> = a.iter().copied().collect();
    let mut qb: std::collections::VecDeque<(f64, f64)> = b.iter().copied().collect();
    let mut out = Vec::new();
    while let (Some(&ia), Some(&ib)) = (qa.front(), qb.front()) {
        if ia == ib {
            out.push(ia);
            qa.pop_front();
            qb.pop_front();
        } else if ia.1 - ia.0 > ib.1 - ib.0 {
            qa.pop_front();
            let mid = 0.5 * (ia.0 + ia.1);
            qa.push_front((mid, ia.1));
            qa.push_front((ia.0, mid));
        } else {
            qb.pop_front();
            let mid = 0.5 * (ib.0 + ib.1);
            qb.push_front((mid, ib.1));
            qb.push_front((ib.0, mid));
        }
    }
    if !qa.is_empty() || !qb.is_empty() {
        return Err(ConstraintError::SpanMismatch);
    }
    Ok(out)
}

/// Partition sanity: sorted, disjoint, covering `[0, horizon]`.
pub fn partition_covers(partition: &[(f64, f64)], horizon: f64) -> bool {
    if partition.is_empty() {
        return false;
    }
    if partition[0].0 != 0.0 || partition[partition.len() - 1].1 != horizon {
        return false;
    }
    partition.windows(2).all(|w| w[0].1 == w[1].0) && partition.iter().all(|&(a, b)| a < b)
}
