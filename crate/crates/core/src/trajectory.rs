//! Composite Bezier parameterization of the configuration-space trajectory.
//!
//! Each joint's trajectory is a degree-`n` Bezier curve per segment, C1
//! across segment boundaries. The first control point of the composite is
//! pinned to the start configuration and excluded from the decision vector;
//! boundary points are shared (C0) and the first interior point of every
//! later segment is the mirror of its predecessor (C1). The map from the
//! decision vector to the control points of each joint's curve, and to the
//! control points of its derivative curve, is affine; those extraction maps
//! drive both the chain-rule gradients and the conservative joint-limit and
//! rate barriers (convex-hull property: bounding the control points bounds
//! the curve).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{penalty, BarrierSpec};
use crate::kinematics::KinematicChain;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("trajectory config: {0}")]
    Config(String),
    #[error("start configuration has dimension {got}, expected {expected}")]
    StartDimension { got: usize, expected: usize },
    #[error("theta has dimension {got}, expected {expected}")]
    ThetaDimension { got: usize, expected: usize },
}

/// Shape of the parameterization: polynomial degree per segment, segment
/// count, and the time horizon in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub degree: usize,
    pub segments: usize,
    pub horizon: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        // Quintic, five segments, five seconds.
        Self {
            degree: 5,
            segments: 5,
            horizon: 5.0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.degree < 1 {
            return Err(TrajectoryError::Config("degree must be >= 1".into()));
        }
        if self.segments < 1 {
            return Err(TrajectoryError::Config("segments must be >= 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(TrajectoryError::Config("horizon must be positive".into()));
        }
        if self.segments > 1 && self.degree < 2 {
            // C1 mirroring needs an interior point to mirror.
            return Err(TrajectoryError::Config(
                "multi-segment curves need degree >= 2 for C1 continuity".into(),
            ));
        }
        Ok(())
    }

    pub fn segment_duration(&self) -> f64 {
        self.horizon / self.segments as f64
    }

    /// Free decision values per joint.
    pub fn theta_per_joint(&self) -> usize {
        self.degree + (self.segments - 1) * (self.degree - 1)
    }

    /// Unique control points per joint (shared boundary points stored once;
    /// mirrored points counted, since they are distinct values).
    pub fn unique_points_per_joint(&self) -> usize {
        (self.degree + 1) + (self.segments - 1) * self.degree
    }

    /// Unique derivative-curve control points per joint.
    pub fn unique_rate_points_per_joint(&self) -> usize {
        self.degree + (self.segments - 1) * (self.degree - 1)
    }

    /// Index into the unique list for control point `i` of segment `s`.
    /// `(s, 0)` for `s >= 1` aliases `(s-1, degree)`.
    fn unique_index(&self, s: usize, i: usize) -> usize {
        if s == 0 {
            i
        } else if i == 0 {
            self.unique_index(s - 1, self.degree)
        } else {
            (self.degree + 1) + (s - 1) * self.degree + (i - 1)
        }
    }
}

/// The decision variables: degree/segment shape, the pinned start
/// configuration, and the free control values.
///
/// Layout of `theta`, joint-major: for each joint, segment 0 contributes its
/// control points 1..=degree, and every later segment contributes points
/// 2..=degree (its point 0 is shared, point 1 mirrored).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryParams {
    spec: TrajectorySpec,
    start: DVector<f64>,
    theta: DVector<f64>,
}

impl TrajectoryParams {
    pub fn new(
        spec: TrajectorySpec,
        start: DVector<f64>,
        theta: DVector<f64>,
    ) -> Result<Self, TrajectoryError> {
        spec.validate()?;
        let expected = start.len() * spec.theta_per_joint();
        if theta.len() != expected {
            return Err(TrajectoryError::ThetaDimension {
                got: theta.len(),
                expected,
            });
        }
        Ok(Self { spec, start, theta })
    }

    /// The constant trajectory resting at `start`.
    pub fn constant(spec: TrajectorySpec, start: DVector<f64>) -> Result<Self, TrajectoryError> {
        spec.validate()?;
        let per = spec.theta_per_joint();
        let mut theta = DVector::zeros(start.len() * per);
        for k in 0..start.len() {
            for i in 0..per {
                theta[k * per + i] = start[k];
            }
        }
        Ok(Self { spec, start, theta })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.start
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn joint_count(&self) -> usize {
        self.start.len()
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self, TrajectoryError> {
        Self::new(self.spec, self.start.clone(), theta)
    }

    /// `self.theta + step * alpha`, shape preserved.
    pub fn stepped(&self, step: &DVector<f64>, alpha: f64) -> Self {
        Self {
            spec: self.spec,
            start: self.start.clone(),
            theta: &self.theta + step * alpha,
        }
    }

    /// Unique control points of joint `k`'s composite curve, in order.
    pub fn control_points(&self, matrices: &ExtractionMatrices, joint: usize) -> DVector<f64> {
        matrices.joint_values(joint, &self.theta)
    }

    /// Control points of segment `s` for joint `k`.
    fn segment_points(&self, values: &DVector<f64>, s: usize) -> Vec<f64> {
        (0..=self.spec.degree)
            .map(|i| values[self.spec.unique_index(s, i)])
            .collect()
    }

    fn locate(&self, t: f64) -> Result<(usize, f64), TrajectoryError> {
        let spec = &self.spec;
        if !(0.0..=spec.horizon).contains(&t) {
            return Err(TrajectoryError::TimeOutOfRange {
                t,
                horizon: spec.horizon,
            });
        }
        if t == spec.horizon {
            // Exact endpoint interpolation regardless of rounding in the
            // segment duration.
            return Ok((spec.segments - 1, 1.0));
        }
        let delta = spec.segment_duration();
        let s = ((t / delta).floor() as usize).min(spec.segments - 1);
        let u = (t - s as f64 * delta) / delta;
        Ok((s, u.clamp(0.0, 1.0)))
    }

    /// Joint vector at time `t` by de Casteljau evaluation.
    pub fn eval(
        &self,
        matrices: &ExtractionMatrices,
        t: f64,
    ) -> Result<DVector<f64>, TrajectoryError> {
        let (s, u) = self.locate(t)?;
        let mut out = DVector::zeros(self.joint_count());
        for k in 0..self.joint_count() {
            let values = matrices.joint_values(k, &self.theta);
            out[k] = de_casteljau(&self.segment_points(&values, s), u);
        }
        Ok(out)
    }

    /// Joint rate vector at time `t`; the derivative of a Bezier curve is a
    /// lower-order Bezier curve over scaled control-point differences.
    pub fn eval_rate(
        &self,
        matrices: &ExtractionMatrices,
        t: f64,
    ) -> Result<DVector<f64>, TrajectoryError> {
        let (s, u) = self.locate(t)?;
        let scale = self.spec.degree as f64 / self.spec.segment_duration();
        let mut out = DVector::zeros(self.joint_count());
        for k in 0..self.joint_count() {
            let values = matrices.joint_values(k, &self.theta);
            let pts = self.segment_points(&values, s);
            let diffs: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]) * scale).collect();
            out[k] = de_casteljau(&diffs, u);
        }
        Ok(out)
    }

    /// Jacobian of `eval(t)` with respect to theta: a `joints x |theta|`
    /// matrix. Row `k` is the Bernstein weight vector of the active segment
    /// pushed through joint `k`'s extraction map.
    pub fn basis_gradient(
        &self,
        matrices: &ExtractionMatrices,
        t: f64,
    ) -> Result<DMatrix<f64>, TrajectoryError> {
        let (s, u) = self.locate(t)?;
        let weights = bernstein_weights(self.spec.degree, u);
        let mut out = DMatrix::zeros(self.joint_count(), self.theta.len());
        for k in 0..self.joint_count() {
            for (i, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let row = matrices.value_row(k, self.spec.unique_index(s, i));
                for j in 0..row.len() {
                    out[(k, j)] += *w * row[j];
                }
            }
        }
        Ok(out)
    }
}

/// Precomputed per-joint control values for repeated time evaluation of one
/// fixed parameter vector: skips the extraction matmul per instant.
pub struct TrajectorySampler<'a> {
    params: &'a TrajectoryParams,
    values: Vec<DVector<f64>>,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(params: &'a TrajectoryParams, matrices: &ExtractionMatrices) -> Self {
        let values = (0..params.joint_count())
            .map(|k| matrices.joint_values(k, params.theta()))
            .collect();
        Self { params, values }
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        let (s, u) = self.params.locate(t)?;
        let mut out = DVector::zeros(self.params.joint_count());
        for (k, values) in self.values.iter().enumerate() {
            out[k] = de_casteljau(&self.params.segment_points(values, s), u);
        }
        Ok(out)
    }

    pub fn eval_rate(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        let (s, u) = self.params.locate(t)?;
        let spec = self.params.spec();
        let scale = spec.degree as f64 / spec.segment_duration();
        let mut out = DVector::zeros(self.params.joint_count());
        for (k, values) in self.values.iter().enumerate() {
            let pts = self.params.segment_points(values, s);
            let diffs: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]) * scale).collect();
            out[k] = de_casteljau(&diffs, u);
        }
        Ok(out)
    }
}

/// Bernstein basis weights of degree `n` at parameter `u`; nonnegative,
/// summing to one.
pub fn bernstein_weights(n: usize, u: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    // Binomials by Pascal row to stay exact for small n.
    let mut binom = vec![1.0f64; n + 1];
    for i in 1..=n {
        binom[i] = binom[i - 1] * (n - i + 1) as f64 / i as f64;
    }
    let v = 1.0 - u;
    for (i, b) in binom.iter().enumerate() {
        w[i] = b * u.powi(i as i32) * v.powi((n - i) as i32);
    }
    w
}

fn de_casteljau(points: &[f64], u: f64) -> f64 {
    let mut work = points.to_vec();
    let v = 1.0 - u;
    for level in (1..work.len()).rev() {
        for i in 0..level {
            // This form is exact at u = 0 and u = 1.
            work[i] = v * work[i] + u * work[i + 1];
        }
    }
    work[0]
}

/// Affine maps from theta to the unique control points of each joint's curve
/// and of its derivative curve: `points = M * theta + offset`.
#[derive(Debug, Clone)]
pub struct ExtractionMatrices {
    value: Vec<DMatrix<f64>>,
    value_offset: Vec<DVector<f64>>,
    rate: Vec<DMatrix<f64>>,
    rate_offset: Vec<DVector<f64>>,
}

impl ExtractionMatrices {
    pub fn new(spec: &TrajectorySpec, start: &DVector<f64>) -> Result<Self, TrajectoryError> {
        spec.validate()?;
        let joints = start.len();
        let per = spec.theta_per_joint();
        let dim = joints * per;
        let n = spec.degree;
        let rows = spec.unique_points_per_joint();

        let mut value = Vec::with_capacity(joints);
        let mut value_offset = Vec::with_capacity(joints);
        let mut rate = Vec::with_capacity(joints);
        let mut rate_offset = Vec::with_capacity(joints);

        for k in 0..joints {
            let base = k * per;
            let mut m = DMatrix::zeros(rows, dim);
            let mut c = DVector::zeros(rows);
            // Segment 0: pinned start, then free points.
            c[0] = start[k];
            for i in 1..=n {
                m[(i, base + i - 1)] = 1.0;
            }
            let mut theta_cursor = n;
            for s in 1..spec.segments {
                let shared = spec.unique_index(s - 1, n);
                let prev_interior = spec.unique_index(s - 1, n - 1);
                // Mirror: P(s,1) = 2 P(s-1,n) - P(s-1,n-1).
                let row1 = spec.unique_index(s, 1);
                let mirrored = 2.0 * m.row(shared) - m.row(prev_interior);
                m.row_mut(row1).copy_from(&mirrored);
                c[row1] = 2.0 * c[shared] - c[prev_interior];
                for i in 2..=n {
                    let row = spec.unique_index(s, i);
                    m[(row, base + theta_cursor)] = 1.0;
                    theta_cursor += 1;
                }
            }
            debug_assert_eq!(theta_cursor, per);

            // Derivative curve: q(s,i) = n/delta * (P(s,i+1) - P(s,i)),
            // unique rows skip the C1-duplicated boundary points.
            let scale = n as f64 / spec.segment_duration();
            let rate_rows = spec.unique_rate_points_per_joint();
            let mut mr = DMatrix::zeros(rate_rows, dim);
            let mut cr = DVector::zeros(rate_rows);
            let mut row = 0;
            for s in 0..spec.segments {
                let first = if s == 0 { 0 } else { 1 };
                for i in first..n {
                    let hi = spec.unique_index(s, i + 1);
                    let lo = spec.unique_index(s, i);
                    let diff = (m.row(hi) - m.row(lo)) * scale;
                    mr.row_mut(row).copy_from(&diff);
                    cr[row] = (c[hi] - c[lo]) * scale;
                    row += 1;
                }
            }
            debug_assert_eq!(row, rate_rows);

            value.push(m);
            value_offset.push(c);
            rate.push(mr);
            rate_offset.push(cr);
        }
        Ok(Self {
            value,
            value_offset,
            rate,
            rate_offset,
        })
    }

    pub fn joint_values(&self, joint: usize, theta: &DVector<f64>) -> DVector<f64> {
        &self.value[joint] * theta + &self.value_offset[joint]
    }

    pub fn joint_rates(&self, joint: usize, theta: &DVector<f64>) -> DVector<f64> {
        &self.rate[joint] * theta + &self.rate_offset[joint]
    }

    pub fn value_row(&self, joint: usize, row: usize) -> nalgebra::RowDVector<f64> {
        self.value[joint].row(row).into_owned()
    }

    pub fn value_rows(&self, joint: usize) -> &DMatrix<f64> {
        &self.value[joint]
    }

    pub fn rate_rows(&self, joint: usize) -> &DMatrix<f64> {
        &self.rate[joint]
    }

    pub fn theta_dim(&self) -> usize {
        self.value[0].ncols()
    }
}

/// Value and gradient of the conservative joint-limit and rate barrier,
/// unweighted: the energy assembly owns the barrier coefficient.
pub struct LimitBarrier {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    /// Gauss-Newton curvature of the barrier, populated on request.
    pub hessian: Option<DMatrix<f64>>,
}

/// Sum of penalties keeping every control point strictly inside the joint
/// limits and every derivative control point strictly inside (-1, 1).
/// Infinite when any point sits on or past a limit. By the convex-hull
/// property a finite value certifies the whole curve.
pub fn limit_barrier(
    params: &TrajectoryParams,
    chain: &KinematicChain,
    matrices: &ExtractionMatrices,
    spec: &BarrierSpec,
    want_hessian: bool,
) -> LimitBarrier {
    limit_barrier_parts(params, chain, matrices, spec, want_hessian, true)
}

/// Joint-limit barrier only, without the unit-rate terms. Used by baselines
/// that honor physical limits but not the rate normalization.
pub fn position_limit_barrier(
    params: &TrajectoryParams,
    chain: &KinematicChain,
    matrices: &ExtractionMatrices,
    spec: &BarrierSpec,
    want_hessian: bool,
) -> LimitBarrier {
    limit_barrier_parts(params, chain, matrices, spec, want_hessian, false)
}

fn limit_barrier_parts(
    params: &TrajectoryParams,
    chain: &KinematicChain,
    matrices: &ExtractionMatrices,
    spec: &BarrierSpec,
    want_hessian: bool,
    include_rates: bool,
) -> LimitBarrier {
    let dim = params.theta().len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut hess = if want_hessian {
        Some(DMatrix::zeros(dim, dim))
    } else {
        None
    };

    let accumulate = |margin: f64,
                          row: nalgebra::RowDVector<f64>,
                          value: &mut f64,
                          grad: &mut DVector<f64>,
                          hess: &mut Option<DMatrix<f64>>|
     -> bool {
        let p = penalty(margin, spec);
        if !p.is_finite() {
            return false;
        }
        if p.value != 0.0 || p.dx != 0.0 {
            *value += p.value;
            grad.axpy(p.dx, &row.transpose(), 1.0);
            if let Some(h) = hess {
                h.ger(p.dxx, &row.transpose(), &row.transpose(), 1.0);
            }
        }
        true
    };

    for k in 0..params.joint_count() {
        let upper = chain.joint_upper()[k];
        let lower = chain.joint_lower()[k];
        let values = matrices.joint_values(k, params.theta());
        for i in 0..values.len() {
            let row = matrices.value_rows(k).row(i).into_owned();
            // P(upper - c): margin shrinks as c grows, so the chain rule
            // flips the row sign.
            if !accumulate(upper - values[i], -row.clone(), &mut value, &mut grad, &mut hess)
                || !accumulate(values[i] - lower, row, &mut value, &mut grad, &mut hess)
            {
                return LimitBarrier {
                    value: f64::INFINITY,
                    gradient: None,
                    hessian: None,
                };
            }
        }
        if !include_rates {
            continue;
        }
        let rates = matrices.joint_rates(k, params.theta());
        for i in 0..rates.len() {
            let row = matrices.rate_rows(k).row(i).into_owned();
            if !accumulate(1.0 - rates[i], -row.clone(), &mut value, &mut grad, &mut hess)
                || !accumulate(1.0 + rates[i], row, &mut value, &mut grad, &mut hess)
            {
                return LimitBarrier {
                    value: f64::INFINITY,
                    gradient: None,
                    hessian: None,
                };
            }
        }
    }
    LimitBarrier {
        value,
        gradient: Some(grad),
        hessian: hess,
    }
}
