//! Open-chain articulated kinematics: forward kinematics, point Jacobians,
//! and conservative per-primitive Lipschitz constants.
//!
//! Chains are trees: every joint names a parent joint or attaches to the
//! world, so branched robots (dual arms, free-flying bodies built from
//! prismatic stacks) use the same machinery as serial arms. Joint rates are
//! normalized to |dTheta/dt| <= 1 per joint; the trajectory barriers enforce
//! that normalization, and the Lipschitz bounds below assume it.

use nalgebra::{DMatrix, DVector, Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Primitive;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain has no joints")]
    Empty,
    #[error("joint {0} references parent {1}, which is not an earlier joint")]
    BadParent(usize, usize),
    #[error("joint {0} has a zero axis")]
    ZeroAxis(usize),
    #[error("links ({links}) must match joint count ({joints})")]
    LinkCount { links: usize, joints: usize },
    #[error("joint limits must satisfy lower < upper elementwise (joint {0})")]
    BadLimits(usize),
    #[error("limit vectors must have one entry per joint")]
    LimitLength,
    #[error("joint vector has dimension {got}, chain has {expected} joints")]
    Dimension { got: usize, expected: usize },
    #[error("link index {0} out of range")]
    BadLink(usize),
    #[error("primitive index {0} out of range for link {1}")]
    BadPrimitive(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Hinge,
    Prismatic,
}

/// One degree of freedom. `parent_offset` places the joint frame relative to
/// its parent's link frame (or the world for roots); the joint motion is
/// applied after the offset, about/along `axis` in the offset frame.
#[derive(Debug, Clone)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: Unit<Vector3<f64>>,
    pub parent_offset: Isometry3<f64>,
    /// Index of the parent joint; `None` attaches to the world.
    pub parent: Option<usize>,
}

/// Articulated chain: joints, per-link collision primitives, and joint
/// limits. Immutable after construction; the Lipschitz table is precomputed.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    links: Vec<Vec<Primitive>>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    link_lengths: Vec<f64>,
    lipschitz: LipschitzTable,
}

/// Per-(link, primitive) upper bounds on |d dist/dt| under unit joint rates,
/// valid for any obstacle and any configuration within limits.
#[derive(Debug, Clone)]
pub struct LipschitzTable {
    entries: Vec<Vec<f64>>,
}

impl LipschitzTable {
    pub fn get(&self, link: usize, primitive: usize) -> f64 {
        self.entries[link][primitive]
    }
}

impl KinematicChain {
    pub fn new(
        joints: Vec<Joint>,
        links: Vec<Vec<Primitive>>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, ChainError> {
        if joints.is_empty() {
            return Err(ChainError::Empty);
        }
        if links.len() != joints.len() {
            return Err(ChainError::LinkCount {
                links: links.len(),
                joints: joints.len(),
            });
        }
        if lower.len() != joints.len() || upper.len() != joints.len() {
            return Err(ChainError::LimitLength);
        }
        for (i, joint) in joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                if p >= i {
                    return Err(ChainError::BadParent(i, p));
                }
            }
            if !joint.axis.norm().is_finite() {
                return Err(ChainError::ZeroAxis(i));
            }
        }
        for i in 0..joints.len() {
            if !(lower[i] < upper[i]) {
                return Err(ChainError::BadLimits(i));
            }
        }
        let link_lengths: Vec<f64> = links
            .iter()
            .map(|prims| prims.iter().map(Primitive::max_reach).fold(0.0, f64::max))
            .collect();
        let mut chain = Self {
            joints,
            links,
            lower,
            upper,
            link_lengths,
            lipschitz: LipschitzTable { entries: vec![] },
        };
        chain.lipschitz = chain.compute_lipschitz_table();
        Ok(chain)
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn links(&self) -> &[Vec<Primitive>] {
        &self.links
    }

    pub fn joint_lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn joint_upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Max reach of link `i`'s primitives from its joint origin, sweep
    /// included. Recomputable from the attached geometry.
    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn lipschitz_table(&self) -> &LipschitzTable {
        &self.lipschitz
    }

    /// Joints on the root path of `link`, tip first.
    pub fn root_path(&self, link: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = Some(link);
        while let Some(i) = cur {
            path.push(i);
            cur = self.joints[i].parent;
        }
        path
    }

    /// Whether two links share a joint (parent/child relation).
    pub fn adjacent_links(&self, a: usize, b: usize) -> bool {
        self.joints[a].parent == Some(b) || self.joints[b].parent == Some(a)
    }

    /// World pose of every link frame, composed root to tip.
    pub fn forward_kinematics(
        &self,
        theta: &DVector<f64>,
    ) -> Result<Vec<Isometry3<f64>>, ChainError> {
        if theta.len() != self.joints.len() {
            return Err(ChainError::Dimension {
                got: theta.len(),
                expected: self.joints.len(),
            });
        }
        let mut poses = Vec::with_capacity(self.joints.len());
        for (i, joint) in self.joints.iter().enumerate() {
            let base = match joint.parent {
                Some(p) => poses[p] * joint.parent_offset,
                None => joint.parent_offset,
            };
            let motion = match joint.kind {
                JointKind::Hinge => Isometry3::from_parts(
                    Translation3::identity(),
                    UnitQuaternion::from_axis_angle(&joint.axis, theta[i]),
                ),
                JointKind::Prismatic => {
                    let shift = joint.axis.into_inner() * theta[i];
                    Isometry3::from_parts(Translation3::from(shift), UnitQuaternion::identity())
                }
            };
            poses.push(base * motion);
        }
        Ok(poses)
    }

    /// 3 x J Jacobian of the world position of `local_point` on `link`.
    /// Columns of joints off the root path are exactly zero.
    pub fn point_jacobian(
        &self,
        theta: &DVector<f64>,
        link: usize,
        local_point: &Point3<f64>,
    ) -> Result<DMatrix<f64>, ChainError> {
        let poses = self.forward_kinematics(theta)?;
        self.point_jacobian_with_fk(&poses, link, local_point)
    }

    /// Same as [`point_jacobian`](Self::point_jacobian) with forward
    /// kinematics already computed.
    pub fn point_jacobian_with_fk(
        &self,
        poses: &[Isometry3<f64>],
        link: usize,
        local_point: &Point3<f64>,
    ) -> Result<DMatrix<f64>, ChainError> {
        if link >= self.joints.len() {
            return Err(ChainError::BadLink(link));
        }
        let p_world = poses[link] * local_point;
        let mut jac = DMatrix::zeros(3, self.joints.len());
        for k in self.root_path(link) {
            let joint = &self.joints[k];
            let base = match joint.parent {
                Some(p) => poses[p] * joint.parent_offset,
                None => joint.parent_offset,
            };
            let axis_world = base.rotation * joint.axis.into_inner();
            let col = match joint.kind {
                JointKind::Hinge => {
                    let origin = Point3::from(base.translation.vector);
                    axis_world.cross(&(p_world - origin))
                }
                JointKind::Prismatic => axis_world,
            };
            jac.set_column(k, &col);
        }
        Ok(jac)
    }

    /// Conservative upper bound on |d dist/dt| for primitive `primitive` on
    /// `link`, for any obstacle, any configuration within limits, and unit
    /// joint rates.
    ///
    /// Column-norm bound on the point Jacobian, maximized over hull vertices:
    /// a hinge joint contributes its straightened lever (path offsets plus
    /// primitive reach), a prismatic joint contributes one.
    pub fn lipschitz_bound(&self, link: usize, primitive: usize) -> Result<f64, ChainError> {
        if link >= self.joints.len() {
            return Err(ChainError::BadLink(link));
        }
        if primitive >= self.links[link].len() {
            return Err(ChainError::BadPrimitive(primitive, link));
        }
        Ok(self.lipschitz_bound_unchecked(link, primitive))
    }

    fn lipschitz_bound_unchecked(&self, link: usize, primitive: usize) -> f64 {
        let reach = self.links[link][primitive].max_reach();
        let mut total = 0.0;
        let mut lever = reach;
        let mut cur = link;
        loop {
            let joint = &self.joints[cur];
            total += match joint.kind {
                JointKind::Hinge => lever,
                JointKind::Prismatic => 1.0,
            };
            match joint.parent {
                Some(p) => {
                    lever += joint.parent_offset.translation.vector.norm();
                    cur = p;
                }
                None => break,
            }
        }
        total
    }

    fn compute_lipschitz_table(&self) -> LipschitzTable {
        let entries = (0..self.joints.len())
            .map(|link| {
                (0..self.links[link].len())
                    .map(|prim| self.lipschitz_bound_unchecked(link, prim))
                    .collect()
            })
            .collect();
        LipschitzTable { entries }
    }
}

/// Free-function form of [`KinematicChain::forward_kinematics`].
pub fn forward_kinematics(
    chain: &KinematicChain,
    theta: &DVector<f64>,
) -> Result<Vec<Isometry3<f64>>, ChainError> {
    chain.forward_kinematics(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PrimitiveKind;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn pt(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    fn hinge_z(offset_x: f64, parent: Option<usize>) -> Joint {
        Joint {
            kind: JointKind::Hinge,
            axis: Vector3::z_axis(),
            parent_offset: Isometry3::translation(offset_x, 0.0, 0.0),
            parent,
        }
    }

    fn tip_point_link() -> Vec<Primitive> {
        vec![Primitive::point(pt(1.0, 0.0, 0.0))]
    }

    /// Two unit links in the xy-plane, hinges about z, a point primitive at
    /// each link tip.
    pub(crate) fn planar_two_link() -> KinematicChain {
        KinematicChain::new(
            vec![hinge_z(0.0, None), hinge_z(1.0, Some(0))],
            vec![tip_point_link(), tip_point_link()],
            DVector::from_element(2, -std::f64::consts::PI),
            DVector::from_element(2, std::f64::consts::PI),
        )
        .unwrap()
    }

    #[test]
    fn straight_reference_configuration() {
        let chain = planar_two_link();
        let poses = chain
            .forward_kinematics(&DVector::from_vec(vec![0.0, 0.0]))
            .unwrap();
        let tip1 = poses[0] * pt(1.0, 0.0, 0.0);
        let tip2 = poses[1] * pt(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(tip1, pt(1.0, 0.0, 0.0), epsilon = 1e-14);
        assert_abs_diff_eq!(tip2, pt(2.0, 0.0, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn quarter_turn() {
        let chain = planar_two_link();
        let poses = chain
            .forward_kinematics(&DVector::from_vec(vec![FRAC_PI_2, 0.0]))
            .unwrap();
        let tip1 = poses[0] * pt(1.0, 0.0, 0.0);
        let tip2 = poses[1] * pt(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(tip1, pt(0.0, 1.0, 0.0), epsilon = 1e-14);
        assert_abs_diff_eq!(tip2, pt(0.0, 2.0, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let chain = planar_two_link();
        assert!(matches!(
            chain.forward_kinematics(&DVector::from_vec(vec![0.0])),
            Err(ChainError::Dimension { .. })
        ));
    }

    #[test]
    fn fk_matches_homogeneous_matrix_products() {
        // Independent oracle: compose 4x4 homogeneous matrices by hand.
        let chain = planar_two_link();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let theta = DVector::from_vec(vec![
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ]);
            let poses = chain.forward_kinematics(&theta).unwrap();

            let rot_z = |t: f64| {
                let (s, c) = t.sin_cos();
                Matrix4::new(
                    c, -s, 0.0, 0.0, //
                    s, c, 0.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 0.0, 1.0,
                )
            };
            let trans_x = |d: f64| Matrix4::new_translation(&Vector3::new(d, 0.0, 0.0));
            let m1 = rot_z(theta[0]);
            let m2 = m1 * trans_x(1.0) * rot_z(theta[1]);
            let tip = m2 * nalgebra::Vector4::new(1.0, 0.0, 0.0, 1.0);
            let got = poses[1] * pt(1.0, 0.0, 0.0);
            assert_abs_diff_eq!(got.x, tip.x, epsilon = 1e-12);
            assert_abs_diff_eq!(got.y, tip.y, epsilon = 1e-12);
            assert_abs_diff_eq!(got.z, tip.z, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_hinge_jacobian_is_unit_lever() {
        let chain = KinematicChain::new(
            vec![hinge_z(0.0, None)],
            vec![tip_point_link()],
            DVector::from_element(1, -4.0),
            DVector::from_element(1, 4.0),
        )
        .unwrap();
        let jac = chain
            .point_jacobian(&DVector::zeros(1), 0, &pt(1.0, 0.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!(jac[(0, 0)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(jac[(1, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(jac[(2, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn prismatic_jacobian_is_axis() {
        let chain = KinematicChain::new(
            vec![Joint {
                kind: JointKind::Prismatic,
                axis: Vector3::x_axis(),
                parent_offset: Isometry3::identity(),
                parent: None,
            }],
            vec![vec![Primitive::point(pt(0.0, 0.0, 0.0))]],
            DVector::from_element(1, -10.0),
            DVector::from_element(1, 10.0),
        )
        .unwrap();
        for q in [-3.0, 0.0, 2.5] {
            let jac = chain
                .point_jacobian(&DVector::from_element(1, q), 0, &pt(0.0, 0.0, 0.0))
                .unwrap();
            assert_abs_diff_eq!(jac[(0, 0)], 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(jac[(1, 0)], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chain = planar_two_link();
        let mut rng = StdRng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..30 {
            let theta = DVector::from_vec(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]);
            let local = pt(
                rng.random_range(0.0..1.0),
                rng.random_range(-0.3..0.3),
                0.0,
            );
            let jac = chain.point_jacobian(&theta, 1, &local).unwrap();
            for k in 0..2 {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let pp = chain.forward_kinematics(&tp).unwrap()[1] * local;
                let pm = chain.forward_kinematics(&tm).unwrap()[1] * local;
                let fd = (pp - pm) / (2.0 * h);
                for r in 0..3 {
                    let denom = fd[r].abs().max(jac[(r, k)].abs()).max(1e-3);
                    assert!(
                        (fd[r] - jac[(r, k)]).abs() / denom < 1e-5,
                        "J[{r},{k}] analytic {} fd {}",
                        jac[(r, k)],
                        fd[r]
                    );
                }
            }
        }
    }

    #[test]
    fn non_ancestor_columns_are_zero() {
        // Branched chain: two arms off the world.
        let chain = KinematicChain::new(
            vec![
                hinge_z(0.0, None),
                hinge_z(1.0, Some(0)),
                hinge_z(2.0, None),
            ],
            vec![tip_point_link(), tip_point_link(), tip_point_link()],
            DVector::from_element(3, -3.0),
            DVector::from_element(3, 3.0),
        )
        .unwrap();
        let theta = DVector::from_vec(vec![0.3, -0.7, 1.1]);
        let jac = chain.point_jacobian(&theta, 1, &pt(1.0, 0.0, 0.0)).unwrap();
        for r in 0..3 {
            assert_eq!(jac[(r, 2)], 0.0);
        }
        let jac = chain.point_jacobian(&theta, 2, &pt(1.0, 0.0, 0.0)).unwrap();
        for r in 0..3 {
            assert_eq!(jac[(r, 0)], 0.0);
            assert_eq!(jac[(r, 1)], 0.0);
        }
    }

    #[test]
    fn lipschitz_single_link() {
        let chain = KinematicChain::new(
            vec![hinge_z(0.0, None)],
            vec![tip_point_link()],
            DVector::from_element(1, -4.0),
            DVector::from_element(1, 4.0),
        )
        .unwrap();
        assert_abs_diff_eq!(chain.lipschitz_bound(0, 0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn lipschitz_two_links_is_three() {
        let chain = planar_two_link();
        // Joint 0 sees lever 1 (offset) + 1 (tip) = 2, joint 1 sees 1.
        assert_abs_diff_eq!(chain.lipschitz_bound(1, 0).unwrap(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn lipschitz_hull_uses_farthest_vertex() {
        let triangle = Primitive::new(
            PrimitiveKind::ConvexPolytope,
            vec![pt(1.5, 0.0, 0.0), pt(0.5, 0.2, 0.0), pt(0.5, -0.2, 0.0)],
            0.0,
        )
        .unwrap();
        let chain = KinematicChain::new(
            vec![hinge_z(0.0, None)],
            vec![vec![triangle]],
            DVector::from_element(1, -4.0),
            DVector::from_element(1, 4.0),
        )
        .unwrap();
        assert_abs_diff_eq!(chain.lipschitz_bound(0, 0).unwrap(), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn prismatic_contributes_one_per_column() {
        let chain = KinematicChain::new(
            vec![
                Joint {
                    kind: JointKind::Prismatic,
                    axis: Vector3::x_axis(),
                    parent_offset: Isometry3::identity(),
                    parent: None,
                },
                hinge_z(0.0, Some(0)),
            ],
            vec![vec![Primitive::point(pt(0.0, 0.0, 0.0))], tip_point_link()],
            DVector::from_element(2, -5.0),
            DVector::from_element(2, 5.0),
        )
        .unwrap();
        // Hinge lever 1 plus prismatic 1.
        assert_abs_diff_eq!(chain.lipschitz_bound(1, 0).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn sampled_speeds_never_exceed_bound() {
        // Mini version of the dedicated oracle: random unit-rate linear
        // paths, finite-difference vertex speeds.
        let chain = planar_two_link();
        let bound = chain.lipschitz_bound(1, 0).unwrap();
        let mut rng = StdRng::seed_from_u64(23);
        let dt = 1e-3;
        let mut max_speed: f64 = 0.0;
        for _ in 0..200 {
            let start = DVector::from_vec(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]);
            let rate = DVector::from_vec(vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let tip = pt(1.0, 0.0, 0.0);
            for i in 0..200 {
                let t = i as f64 * 5e-3;
                let a = chain.forward_kinematics(&(&start + &rate * t)).unwrap()[1] * tip;
                let b = chain
                    .forward_kinematics(&(&start + &rate * (t + dt)))
                    .unwrap()[1]
                    * tip;
                max_speed = max_speed.max((b - a).norm() / dt);
            }
        }
        assert!(max_speed <= bound + 1e-9, "{max_speed} > {bound}");
        // The bound is not vacuous: straight-line spinning approaches it.
        assert!(max_speed > 0.5 * bound);
    }
}
