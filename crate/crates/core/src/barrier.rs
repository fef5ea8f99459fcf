//! Locally supported barrier penalty and the constants that drive the solver.
//!
//! The penalty is `P(x) = (x0 - x)^3 / x^4` on `(0, x0]` and zero beyond
//! `x0`. It is twice continuously differentiable at the support boundary and
//! satisfies `x * P(x) -> inf` as `x -> 0`, which is what makes interval
//! penalties diverge on contact. A plain log barrier fails that limit; it is
//! kept here only as a negative control for the diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error("barrier config: {0}")]
    Config(String),
}

/// All barrier and safety-margin constants in one place.
///
/// `mu` is the *initial* barrier weight; the solver owns the current value
/// during continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierSpec {
    /// Support width of the penalty (meters).
    pub x0: f64,
    /// Required clearance between robot and obstacles (meters).
    pub d0: f64,
    /// Initial barrier weight.
    pub mu: f64,
    /// Safety-margin constant in `psi(x) = L1*x/2 + L2*x^eta`.
    pub l2: f64,
    /// Safety-margin exponent; must satisfy `0 < eta < 1/6`.
    pub eta: f64,
    /// Outer-loop floor for the barrier weight.
    pub eps_mu: f64,
    /// Gradient infinity-norm tolerance for the inner loop.
    pub eps_d: f64,
    /// Shrink factor for both the barrier weight and the line-search step.
    pub gamma: f64,
    /// Sufficient-decrease constant of the Wolfe test.
    pub c_wolfe: f64,
}

impl Default for BarrierSpec {
    fn default() -> Self {
        Self {
            x0: 1e-3,
            d0: 0.0,
            mu: 1e-2,
            l2: 1e-4,
            eta: 1.0 / 7.0,
            eps_mu: 1e-6,
            eps_d: 1e-4,
            gamma: 0.5,
            c_wolfe: 1e-4,
        }
    }
}

impl BarrierSpec {
    pub fn validate(&self) -> Result<(), BarrierError> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(BarrierError::Config(msg.to_string()))
            }
        };
        check(self.x0 > 0.0, "x0 must be positive")?;
        check(self.d0 >= 0.0, "d0 must be nonnegative")?;
        check(self.mu > 0.0, "mu must be positive")?;
        check(self.l2 > 0.0, "l2 must be positive")?;
        // The finite-termination argument needs eta strictly below 1/6.
        check(
            self.eta > 0.0 && self.eta < 1.0 / 6.0,
            "eta must lie in (0, 1/6)",
        )?;
        check(self.eps_mu > 0.0, "eps_mu must be positive")?;
        check(self.eps_d > 0.0, "eps_d must be positive")?;
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma must lie in (0, 1)",
        )?;
        check(
            self.c_wolfe > 0.0 && self.c_wolfe < 1.0,
            "c_wolfe must lie in (0, 1)",
        )?;
        Ok(())
    }

    /// Conservative safety margin for an interval of length `len` with
    /// combined Lipschitz constant `lipschitz_sum`.
    pub fn psi(&self, lipschitz_sum: f64, len: f64) -> f64 {
        if len == 0.0 {
            return 0.0;
        }
        lipschitz_sum * len / 2.0 + self.l2 * len.powf(self.eta)
    }
}

/// Value and first two derivatives of the penalty at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
}

impl Penalty {
    const ZERO: Penalty = Penalty {
        value: 0.0,
        dx: 0.0,
        dxx: 0.0,
    };

    /// Saturating sentinel for evaluations at or past the pole. The infinite
    /// value propagates through sums and always fails the Wolfe test;
    /// derivatives must never be consumed there.
    const INFINITE: Penalty = Penalty {
        value: f64::INFINITY,
        dx: f64::NEG_INFINITY,
        dxx: f64::INFINITY,
    };

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `P(x) = (x0 - x)^3 / x^4` on `(0, x0]`, zero for `x > x0`, infinite for
/// `x <= 0`. Callers must never consume derivatives of the infinite branch.
pub fn penalty(x: f64, spec: &BarrierSpec) -> Penalty {
    let x0 = spec.x0;
    if x <= 0.0 {
        return Penalty::INFINITE;
    }
    if x >= x0 {
        return Penalty::ZERO;
    }
    let s = x0 - x;
    let x2 = x * x;
    let x4 = x2 * x2;
    let value = s * s * s / x4;
    let dx = -3.0 * s * s / x4 - 4.0 * s * s * s / (x4 * x);
    let dxx = 6.0 * s / x4 + 24.0 * s * s / (x4 * x) + 20.0 * s * s * s / (x4 * x2);
    Penalty { value, dx, dxx }
}

/// Which penalty a diagnostic evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// The locally supported `(x0 - x)^3 / x^4` barrier.
    Local,
    /// `-log(x)`, the classical barrier. Negative control only: it does not
    /// satisfy `x * P(x) -> inf`.
    Log,
}

fn penalty_value(kind: PenaltyKind, x: f64, spec: &BarrierSpec) -> f64 {
    match kind {
        PenaltyKind::Local => penalty(x, spec).value,
        PenaltyKind::Log => {
            if x <= 0.0 {
                f64::INFINITY
            } else {
                -x.ln()
            }
        }
    }
}

/// Result of sampling `x * P(x)` on the geometric grid `x = x0 * 2^-n`.
#[derive(Debug, Clone)]
pub struct Assumption3Report {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// Strictly increasing along the grid.
    pub monotone_increasing: bool,
    pub final_value: f64,
}

impl Assumption3Report {
    pub fn exceeds(&self, threshold: f64) -> bool {
        self.final_value > threshold
    }
}

/// Samples `x * P(x)` on `x = x0 * 2^-n` for `n = 1..=samples`. For the local
/// barrier the sequence is `(2^n - 1)^3`, strictly increasing without bound;
/// for the log barrier it decays to zero.
pub fn assumption3_check(spec: &BarrierSpec, kind: PenaltyKind, samples: usize) -> Assumption3Report {
    assert!(samples >= 2, "assumption3_check needs at least 2 samples");
    let mut xs = Vec::with_capacity(samples);
    let mut values = Vec::with_capacity(samples);
    for n in 1..=samples {
        let x = spec.x0 * 0.5f64.powi(n as i32);
        xs.push(x);
        values.push(x * penalty_value(kind, x, spec));
    }
    let monotone_increasing = values.windows(2).all(|w| w[1] > w[0]);
    let final_value = *values.last().unwrap();
    Assumption3Report {
        xs,
        values,
        monotone_increasing,
        final_value,
    }
}

/// Midpoint quadrature of `P(profile(t) - d0)` over `[t0, t1]`.
///
/// Diagnostic only; the solver never integrates the penalty. An open rule is
/// used so grid nodes never land exactly on a pole of the integrand, which
/// lets the improper (but finite) log-barrier integrals converge while the
/// local barrier's divergence shows up as unbounded growth under refinement.
pub fn quadrature_penalty_integral<F: Fn(f64) -> f64>(
    distance_profile: F,
    interval: (f64, f64),
    kind: PenaltyKind,
    spec: &BarrierSpec,
    resolution: usize,
) -> f64 {
    assert!(resolution >= 1, "quadrature needs at least one cell");
    let (t0, t1) = interval;
    let h = (t1 - t0) / resolution as f64;
    let mut sum = 0.0;
    for i in 0..resolution {
        let t = t0 + (i as f64 + 0.5) * h;
        sum += penalty_value(kind, distance_profile(t) - spec.d0, spec);
    }
    sum * h
}
