//! Feasibility-guaranteed trajectory optimization for articulated chains.
//!
//! The collision-free trajectory problem has one constraint per time instant,
//! so it is a semi-infinite program. This crate reduces the infinite
//! temporal constraint set to midpoint surrogate constraints over a disjoint
//! interval partition, guards each surrogate with a conservative Lipschitz
//! motion bound, and drives a feasible interior-point method whose every
//! accepted iterate satisfies the continuous-time constraints. When the
//! conservative bound blocks progress, the offending interval is midpoint
//! subdivided and optimization continues.
//!
//! Module map:
//! - [`geometry`]: convex primitives and differentiable pairwise distance.
//! - [`kinematics`]: open-chain forward kinematics, point Jacobians, and
//!   conservative Lipschitz constants.
//! - [`trajectory`]: composite Bezier parameterization with conservative
//!   joint-limit and rate barriers.
//! - [`barrier`]: the locally supported penalty and its diagnostics.
//! - [`constraints`]: interval leaves, the spatial-temporal BVH, energy
//!   assembly, the safety check, and subdivision.
//! - [`solver`]: search directions, the safety-aware line search, and the
//!   interior-point loop.
//! - [`oracle`]: independent dense-sampling audits, Lipschitz ground truth,
//!   and the exchange-method baseline.
//! - [`scene`]: serializable scene descriptions and the bundled examples.

pub mod barrier;
pub mod constraints;
pub mod geometry;
pub mod kinematics;
pub mod oracle;
pub mod problem;
pub mod scene;
pub mod solver;
pub mod trajectory;
