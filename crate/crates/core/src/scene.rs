//! Self-contained scene descriptions: chain, obstacles, problem, and solver
//! configuration in one serializable file, plus the bundled example scenes.
//!
//! The schema is strict: unknown keys are rejected, all units are SI, angles
//! are radians. Rotations are roll-pitch-yaw about fixed axes.

use std::sync::Arc;

use nalgebra::{DVector, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::BarrierSpec;
use crate::geometry::{Primitive, PrimitiveKind};
use crate::kinematics::{Joint, JointKind, KinematicChain};
use crate::problem::{
    CompositeObjective, DirectionOrder, Obstacle, Problem, SolverConfig, TargetTerm,
};
use crate::trajectory::TrajectorySpec;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene.{field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Chain(#[from] crate::kinematics::ChainError),
    #[error(transparent)]
    Config(#[from] crate::problem::ConfigError),
}

fn invalid(field: &str, message: impl Into<String>) -> SceneError {
    SceneError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub translation: [f64; 3],
    /// Roll, pitch, yaw in radians.
    #[serde(default)]
    pub rotation_rpy: [f64; 3],
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            rotation_rpy: [0.0; 3],
        }
    }
}

impl PoseSpec {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rotation_rpy;
        Isometry3::from_parts(
            Translation3::new(self.translation[0], self.translation[1], self.translation[2]),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    pub vertices: Vec<[f64; 3]>,
    #[serde(default)]
    pub sweep_radius: f64,
}

impl PrimitiveSpec {
    pub fn to_primitive(&self) -> Result<Primitive, SceneError> {
        let vertices = self
            .vertices
            .iter()
            .map(|v| Point3::new(v[0], v[1], v[2]))
            .collect();
        Ok(Primitive::new(self.kind, vertices, self.sweep_radius)?)
    }

    pub fn from_primitive(p: &Primitive) -> Self {
        Self {
            kind: p.kind(),
            vertices: p.vertices().iter().map(|v| [v.x, v.y, v.z]).collect(),
            sweep_radius: p.sweep_radius(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub kind: JointKind,
    pub axis: [f64; 3],
    #[serde(default)]
    pub offset: PoseSpec,
    /// Parent joint index; `null` attaches to the world.
    pub parent: Option<usize>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub joints: Vec<JointSpec>,
    /// Per link: attached collision primitives in the link frame.
    pub links: Vec<Vec<PrimitiveSpec>>,
}

impl ChainSpec {
    pub fn to_chain(&self) -> Result<KinematicChain, SceneError> {
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, j) in self.joints.iter().enumerate() {
            let axis = Vector3::new(j.axis[0], j.axis[1], j.axis[2]);
            if axis.norm_squared() == 0.0 {
                return Err(invalid(
                    &format!("chain.joints[{i}].axis"),
                    "must be a nonzero vector",
                ));
            }
            joints.push(Joint {
                kind: j.kind,
                axis: nalgebra::Unit::new_normalize(axis),
                parent_offset: j.offset.to_isometry(),
                parent: j.parent,
            });
        }
        let links = self
            .links
            .iter()
            .map(|prims| prims.iter().map(PrimitiveSpec::to_primitive).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        let lower = DVector::from_iterator(self.joints.len(), self.joints.iter().map(|j| j.lower));
        let upper = DVector::from_iterator(self.joints.len(), self.joints.iter().map(|j| j.upper));
        Ok(KinematicChain::new(joints, links, lower, upper)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub primitive: PrimitiveSpec,
    #[serde(default)]
    pub pose: PoseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub link: usize,
    pub local_point: [f64; 3],
    pub position: [f64; 3],
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Time horizon T in seconds.
    pub horizon: f64,
    /// Required clearance d0 in meters.
    pub d0: f64,
    /// Start configuration (pinned at t = 0).
    pub start: Vec<f64>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub smoothness_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub x0: f64,
    pub l2: f64,
    pub eta: f64,
    pub mu: f64,
    pub eps_d: f64,
    pub eps_mu: f64,
    pub gamma: f64,
    pub c_wolfe: f64,
    pub alpha0: f64,
    pub eps_alpha: f64,
    pub eps_alpha_reset: bool,
    pub degree: usize,
    pub segments: usize,
    pub initial_splits: usize,
    pub order: DirectionOrder,
    pub self_collision: bool,
    pub include_adjacent_self_pairs: bool,
    pub max_inner_iterations: usize,
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let config = SolverConfig::default();
        Self {
            x0: config.barrier.x0,
            l2: config.barrier.l2,
            eta: config.barrier.eta,
            mu: config.barrier.mu,
            eps_d: config.barrier.eps_d,
            eps_mu: config.barrier.eps_mu,
            gamma: config.barrier.gamma,
            c_wolfe: config.barrier.c_wolfe,
            alpha0: config.alpha0,
            eps_alpha: config.eps_alpha,
            eps_alpha_reset: config.eps_alpha_reset,
            degree: config.trajectory.degree,
            segments: config.trajectory.segments,
            initial_splits: config.initial_splits,
            order: config.order,
            self_collision: false,
            include_adjacent_self_pairs: false,
            max_inner_iterations: config.max_inner_iterations,
            seed: 0,
        }
    }
}

/// A probe evaluated on the final configuration: is the named point inside
/// the box? Used by the cage scene to assert the body stayed inside.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainmentProbe {
    pub link: usize,
    pub local_point: [f64; 3],
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
}

impl ContainmentProbe {
    pub fn contains(&self, chain: &KinematicChain, theta: &DVector<f64>) -> bool {
        let fk = match chain.forward_kinematics(theta) {
            Ok(fk) => fk,
            Err(_) => return false,
        };
        let p = fk[self.link]
            * Point3::new(self.local_point[0], self.local_point[1], self.local_point[2]);
        (0..3).all(|k| p[k] >= self.box_min[k] && p[k] <= self.box_max[k])
    }
}

/// One self-contained scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub chain: ChainSpec,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub containment_probe: Option<ContainmentProbe>,
}

impl SceneFile {
    /// Validates and lowers the scene into a problem and solver config.
    pub fn to_problem(&self) -> Result<(Problem, SolverConfig), SceneError> {
        let chain = self.chain.to_chain()?;
        if self.chain.links.len() != self.chain.joints.len() {
            return Err(invalid(
                "chain.links",
                "one primitive list per joint is required",
            ));
        }
        if self.problem.start.len() != chain.joint_count() {
            return Err(invalid(
                "problem.start",
                format!(
                    "dimension {} does not match the {}-joint chain",
                    self.problem.start.len(),
                    chain.joint_count()
                ),
            ));
        }
        if !(self.problem.horizon > 0.0) {
            return Err(invalid("problem.horizon", "must be positive"));
        }
        if self.problem.d0 < 0.0 {
            return Err(invalid("problem.d0", "must be nonnegative"));
        }
        for (i, t) in self.problem.targets.iter().enumerate() {
            if t.link >= chain.joint_count() {
                return Err(invalid(
                    &format!("problem.targets[{i}].link"),
                    "link index out of range",
                ));
            }
        }
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| {
                Ok(Obstacle {
                    primitive: o.primitive.to_primitive()?,
                    pose: o.pose.to_isometry(),
                })
            })
            .collect::<Result<Vec<_>, SceneError>>()?;
        let objective = CompositeObjective {
            targets: self
                .problem
                .targets
                .iter()
                .map(|t| TargetTerm {
                    link: t.link,
                    local_point: Point3::new(
                        t.local_point[0],
                        t.local_point[1],
                        t.local_point[2],
                    ),
                    position: Point3::new(t.position[0], t.position[1], t.position[2]),
                    weight: t.weight,
                })
                .collect(),
            smoothness_weight: self.problem.smoothness_weight,
        };
        let problem = Problem {
            chain,
            obstacles,
            objective: Arc::new(objective),
            start: DVector::from_vec(self.problem.start.clone()),
            self_collision: self.solver.self_collision,
            include_adjacent_self_pairs: self.solver.include_adjacent_self_pairs,
        };
        let config = SolverConfig {
            barrier: BarrierSpec {
                x0: self.solver.x0,
                d0: self.problem.d0,
                mu: self.solver.mu,
                l2: self.solver.l2,
                eta: self.solver.eta,
                eps_mu: self.solver.eps_mu,
                eps_d: self.solver.eps_d,
                gamma: self.solver.gamma,
                c_wolfe: self.solver.c_wolfe,
            },
            trajectory: TrajectorySpec {
                degree: self.solver.degree,
                segments: self.solver.segments,
                horizon: self.problem.horizon,
            },
            initial_splits: self.solver.initial_splits,
            order: self.solver.order,
            alpha0: self.solver.alpha0,
            eps_alpha: self.solver.eps_alpha,
            eps_alpha_reset: self.solver.eps_alpha_reset,
            eps_d_decay: None,
            max_inner_iterations: self.solver.max_inner_iterations,
            stall_cap: SolverConfig::default().stall_cap,
            presubdivision_rounds: SolverConfig::default().presubdivision_rounds,
        };
        config.validate()?;
        Ok((problem, config))
    }
}

/// Serialized trajectory: enough to rebuild [`crate::trajectory::TrajectoryParams`]
/// and round-trip through the verifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub degree: usize,
    pub segments: usize,
    pub horizon: f64,
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
}

impl TrajectoryFile {
    pub fn from_params(params: &crate::trajectory::TrajectoryParams) -> Self {
        Self {
            degree: params.spec().degree,
            segments: params.spec().segments,
            horizon: params.spec().horizon,
            start: params.start().iter().copied().collect(),
            theta: params.theta().iter().copied().collect(),
        }
    }

    pub fn to_params(&self) -> Result<crate::trajectory::TrajectoryParams, SceneError> {
        crate::trajectory::TrajectoryParams::new(
            TrajectorySpec {
                degree: self.degree,
                segments: self.segments,
                horizon: self.horizon,
            },
            DVector::from_vec(self.start.clone()),
            DVector::from_vec(self.theta.clone()),
        )
        .map_err(|e| invalid("trajectory", e.to_string()))
    }
}

/// Bundled example scenes. Each acceptance criterion is pinned to one of
/// these; the CLI `demo` command writes them out as JSON.
pub mod bundled {
    use super::*;

    fn hinge_z(offset: [f64; 3], rpy: [f64; 3], parent: Option<usize>, limit: f64) -> JointSpec {
        JointSpec {
            kind: JointKind::Hinge,
            axis: [0.0, 0.0, 1.0],
            offset: PoseSpec {
                translation: offset,
                rotation_rpy: rpy,
            },
            parent,
            lower: -limit,
            upper: limit,
        }
    }

    fn rod(length: f64, sweep: f64) -> PrimitiveSpec {
        PrimitiveSpec {
            kind: PrimitiveKind::Segment,
            vertices: vec![[0.0, 0.0, 0.0], [length, 0.0, 0.0]],
            sweep_radius: sweep,
        }
    }

    fn point_obstacle(x: f64, y: f64, sweep: f64) -> ObstacleSpec {
        ObstacleSpec {
            primitive: PrimitiveSpec {
                kind: PrimitiveKind::Point,
                vertices: vec![[x, y, 0.0]],
                sweep_radius: sweep,
            },
            pose: PoseSpec::default(),
        }
    }

    /// Two-link planar arm, no obstacles: the sanity baseline.
    pub fn obstacle_free() -> SceneFile {
        SceneFile {
            chain: ChainSpec {
                joints: vec![
                    hinge_z([0.0; 3], [0.0; 3], None, 3.2),
                    hinge_z([1.0, 0.0, 0.0], [0.0; 3], Some(0), 3.2),
                ],
                links: vec![vec![rod(1.0, 1e-4)], vec![rod(1.0, 1e-4)]],
            },
            obstacles: vec![],
            problem: ProblemSpec {
                horizon: 5.0,
                d0: 0.01,
                start: vec![0.0, 0.0],
                targets: vec![TargetSpec {
                    link: 1,
                    local_point: [1.0, 0.0, 0.0],
                    position: [1.2, 0.9, 0.0],
                    weight: 1.0,
                }],
                smoothness_weight: 1e-3,
            },
            solver: SolverSpec::default(),
            containment_probe: None,
        }
    }

    /// Two-link planar arm reaching around a disc between start and target.
    pub fn planar_reach() -> SceneFile {
        SceneFile {
            chain: ChainSpec {
                joints: vec![
                    hinge_z([0.0; 3], [0.0; 3], None, 3.2),
                    hinge_z([1.0, 0.0, 0.0], [0.0; 3], Some(0), 3.2),
                ],
                links: vec![vec![rod(1.0, 1e-4)], vec![rod(1.0, 1e-4)]],
            },
            obstacles: vec![point_obstacle(1.2, 0.7, 0.2)],
            problem: ProblemSpec {
                horizon: 5.0,
                d0: 0.01,
                start: vec![0.0, 0.0],
                targets: vec![TargetSpec {
                    link: 1,
                    local_point: [1.0, 0.0, 0.0],
                    position: [0.2, 1.6, 0.0],
                    weight: 1.0,
                }],
                smoothness_weight: 1e-3,
            },
            solver: SolverSpec::default(),
            containment_probe: None,
        }
    }

    /// Two 2-link arms sharing a workspace; self collision between the arms
    /// is on and the targets pull the end effectors close together.
    pub fn dual_arm() -> SceneFile {
        SceneFile {
            chain: ChainSpec {
                joints: vec![
                    hinge_z([0.0; 3], [0.0; 3], None, 3.2),
                    hinge_z([1.0, 0.0, 0.0], [0.0; 3], Some(0), 3.2),
                    // Second arm: rooted to the right, zero config points -x.
                    hinge_z([2.2, 1.0, 0.0], [0.0, 0.0, std::f64::consts::PI], None, 3.2),
                    hinge_z([1.0, 0.0, 0.0], [0.0; 3], Some(2), 3.2),
                ],
                links: vec![
                    vec![rod(1.0, 0.02)],
                    vec![rod(1.0, 0.02)],
                    vec![rod(1.0, 0.02)],
                    vec![rod(1.0, 0.02)],
                ],
            },
            obstacles: vec![point_obstacle(1.1, 0.55, 0.12)],
            problem: ProblemSpec {
                horizon: 5.0,
                d0: 0.01,
                start: vec![0.0, 0.0, 0.0, 0.0],
                targets: vec![
                    TargetSpec {
                        link: 1,
                        local_point: [1.0, 0.0, 0.0],
                        position: [1.3, 0.9, 0.0],
                        weight: 1.0,
                    },
                    TargetSpec {
                        link: 3,
                        local_point: [1.0, 0.0, 0.0],
                        position: [0.9, 0.15, 0.0],
                        weight: 1.0,
                    },
                ],
                smoothness_weight: 1e-3,
            },
            solver: SolverSpec {
                self_collision: true,
                ..SolverSpec::default()
            },
            containment_probe: None,
        }
    }

    /// Translating square body caged by a ring of posts with gaps smaller
    /// than the body; the target sits outside. A feasible method must leave
    /// the body inside.
    pub fn cage() -> SceneFile {
        let mut obstacles = Vec::new();
        // Posts along the perimeter of the square |x| = 1 or |y| = 1,
        // spaced 0.35 with radius 0.05: surface gap 0.25 against a body of
        // width 0.42.
        let post = |x: f64, y: f64| ObstacleSpec {
            primitive: PrimitiveSpec {
                kind: PrimitiveKind::Segment,
                vertices: vec![[x, y, -0.5], [x, y, 0.5]],
                sweep_radius: 0.05,
            },
            pose: PoseSpec::default(),
        };
        let n = 6; // posts per side; spacing 2/6 = 0.333
        for i in 0..n {
            let c = -1.0 + 2.0 * i as f64 / n as f64;
            obstacles.push(post(c, -1.0));
            obstacles.push(post(1.0, c));
            obstacles.push(post(-c, 1.0));
            obstacles.push(post(-1.0, -c));
        }
        SceneFile {
            chain: ChainSpec {
                joints: vec![
                    JointSpec {
                        kind: JointKind::Prismatic,
                        axis: [1.0, 0.0, 0.0],
                        offset: PoseSpec::default(),
                        parent: None,
                        lower: -2.0,
                        upper: 2.0,
                    },
                    JointSpec {
                        kind: JointKind::Prismatic,
                        axis: [0.0, 1.0, 0.0],
                        offset: PoseSpec::default(),
                        parent: Some(0),
                        lower: -2.0,
                        upper: 2.0,
                    },
                ],
                links: vec![
                    vec![],
                    vec![PrimitiveSpec {
                        kind: PrimitiveKind::ConvexPolytope,
                        vertices: vec![
                            [-0.2, -0.2, 0.0],
                            [0.2, -0.2, 0.0],
                            [0.2, 0.2, 0.0],
                            [-0.2, 0.2, 0.0],
                        ],
                        sweep_radius: 0.01,
                    }],
                ],
            },
            obstacles,
            problem: ProblemSpec {
                horizon: 5.0,
                d0: 0.01,
                start: vec![0.0, 0.0],
                targets: vec![TargetSpec {
                    link: 1,
                    local_point: [0.0, 0.0, 0.0],
                    position: [3.0, 0.0, 0.0],
                    weight: 1.0,
                }],
                smoothness_weight: 1e-4,
            },
            solver: SolverSpec::default(),
            containment_probe: Some(ContainmentProbe {
                link: 1,
                local_point: [0.0, 0.0, 0.0],
                box_min: [-1.0, -1.0, -1.0],
                box_max: [1.0, 1.0, 1.0],
            }),
        }
    }

    /// Three-link arm asked to fold its outer link onto its base link: the
    /// target demands interpenetration, so the non-adjacent self pair must
    /// hold the clearance line.
    pub fn self_collision() -> SceneFile {
        SceneFile {
            chain: ChainSpec {
                joints: vec![
                    // The base barely rotates; the fold has to happen above it.
                    hinge_z([0.0; 3], [0.0; 3], None, 0.2),
                    hinge_z([1.0, 0.0, 0.0], [0.0; 3], Some(0), 3.2),
                    hinge_z([1.0, 0.0, 0.0], [0.0; 3], Some(1), 3.2),
                ],
                links: vec![
                    vec![rod(1.0, 0.02)],
                    vec![rod(1.0, 0.02)],
                    vec![rod(1.0, 0.02)],
                ],
            },
            obstacles: vec![],
            problem: ProblemSpec {
                horizon: 5.0,
                d0: 0.01,
                start: vec![0.0, 0.0, 0.0],
                targets: vec![TargetSpec {
                    link: 2,
                    local_point: [0.5, 0.0, 0.0],
                    position: [0.5, 0.03, 0.0],
                    weight: 1.0,
                }],
                smoothness_weight: 1e-3,
            },
            solver: SolverSpec {
                self_collision: true,
                ..SolverSpec::default()
            },
            containment_probe: None,
        }
    }

    /// Name/constructor table for the demo command and the acceptance suite.
    pub fn all() -> Vec<(&'static str, SceneFile)> {
        vec![
            ("obstacle_free", obstacle_free()),
            ("planar_reach", planar_reach()),
            ("dual_arm", dual_arm()),
            ("cage", cage()),
            ("self_collision", self_collision()),
        ]
    }
}
