//! Convex collision primitives with differentiable pairwise distance.
//!
//! Primitives are points, segments, or convex polytopes given by vertices in
//! a local frame, each optionally sphere-swept by `sweep_radius`: the
//! effective shape is the Minkowski sum of the vertex hull and a ball. The
//! sweep is how strict convexity is realized here; it makes the distance
//! field C1 almost everywhere at the cost of a one-line correction on
//! distances.

mod gjk;

pub use gjk::distance;

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("primitive has no vertices")]
    EmptyVertices,
    #[error("segment endpoints coincide")]
    DegenerateSegment,
    #[error("{kind:?} primitive needs {expected} vertices, got {got}")]
    VertexCount {
        kind: PrimitiveKind,
        expected: &'static str,
        got: usize,
    },
    #[error("sweep radius must be finite and nonnegative, got {0}")]
    BadSweepRadius(f64),
    #[error("support direction must be nonzero")]
    ZeroDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Point,
    Segment,
    ConvexPolytope,
}

/// A convex primitive: vertex set in local frame plus a sweep radius.
///
/// Construction validates the kind invariants, so every `Primitive` in
/// circulation is well formed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawPrimitive", into = "RawPrimitive")]
pub struct Primitive {
    kind: PrimitiveKind,
    vertices: Vec<Point3<f64>>,
    sweep_radius: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPrimitive {
    kind: PrimitiveKind,
    vertices: Vec<Point3<f64>>,
    #[serde(default)]
    sweep_radius: f64,
}

impl TryFrom<RawPrimitive> for Primitive {
    type Error = GeometryError;
    fn try_from(raw: RawPrimitive) -> Result<Self, Self::Error> {
        Primitive::new(raw.kind, raw.vertices, raw.sweep_radius)
    }
}

impl From<Primitive> for RawPrimitive {
    fn from(p: Primitive) -> Self {
        RawPrimitive {
            kind: p.kind,
            vertices: p.vertices,
            sweep_radius: p.sweep_radius,
        }
    }
}

impl Primitive {
    pub fn new(
        kind: PrimitiveKind,
        vertices: Vec<Point3<f64>>,
        sweep_radius: f64,
    ) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::EmptyVertices);
        }
        if !(sweep_radius >= 0.0 && sweep_radius.is_finite()) {
            return Err(GeometryError::BadSweepRadius(sweep_radius));
        }
        match kind {
            PrimitiveKind::Point => {
                if vertices.len() != 1 {
                    return Err(GeometryError::VertexCount {
                        kind,
                        expected: "exactly 1",
                        got: vertices.len(),
                    });
                }
            }
            PrimitiveKind::Segment => {
                if vertices.len() != 2 {
                    return Err(GeometryError::VertexCount {
                        kind,
                        expected: "exactly 2",
                        got: vertices.len(),
                    });
                }
                if vertices[0] == vertices[1] {
                    return Err(GeometryError::DegenerateSegment);
                }
            }
            PrimitiveKind::ConvexPolytope => {
                // A hull collapsing to lower dimension is allowed; too few
                // vertices are not.
                if vertices.len() < 3 {
                    return Err(GeometryError::VertexCount {
                        kind,
                        expected: "at least 3",
                        got: vertices.len(),
                    });
                }
            }
        }
        Ok(Self {
            kind,
            vertices,
            sweep_radius,
        })
    }

    pub fn point(p: Point3<f64>) -> Self {
        Self::new(PrimitiveKind::Point, vec![p], 0.0).expect("single point is always valid")
    }

    pub fn segment(a: Point3<f64>, b: Point3<f64>) -> Result<Self, GeometryError> {
        Self::new(PrimitiveKind::Segment, vec![a, b], 0.0)
    }

    pub fn polytope(vertices: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        Self::new(PrimitiveKind::ConvexPolytope, vertices, 0.0)
    }

    pub fn with_sweep(mut self, sweep_radius: f64) -> Result<Self, GeometryError> {
        if !(sweep_radius >= 0.0 && sweep_radius.is_finite()) {
            return Err(GeometryError::BadSweepRadius(sweep_radius));
        }
        self.sweep_radius = sweep_radius;
        Ok(self)
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.kind
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn sweep_radius(&self) -> f64 {
        self.sweep_radius
    }

    /// Max distance from the local origin to the inflated surface.
    pub fn max_reach(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.coords.norm())
            .fold(0.0, f64::max)
            + self.sweep_radius
    }

    /// Supporting vertex of the core hull (sweep excluded) in world frame.
    /// Ties break toward the lowest vertex index.
    pub(crate) fn support_core(
        &self,
        world_vertices: &[Point3<f64>],
        dir: &Vector3<f64>,
    ) -> (usize, Point3<f64>) {
        debug_assert_eq!(world_vertices.len(), self.vertices.len());
        let mut best = 0;
        let mut best_dot = world_vertices[0].coords.dot(dir);
        for (i, w) in world_vertices.iter().enumerate().skip(1) {
            let d = w.coords.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        (best, world_vertices[best])
    }

    pub(crate) fn world_vertices(&self, pose: &Isometry3<f64>) -> Vec<Point3<f64>> {
        self.vertices.iter().map(|v| pose * v).collect()
    }

    /// Axis-aligned bounds of the inflated shape in world frame.
    pub fn world_aabb(&self, pose: &Isometry3<f64>) -> Aabb {
        let mut aabb = Aabb::from_points(self.world_vertices(pose).iter());
        aabb.inflate(self.sweep_radius);
        aabb
    }
}

/// Sweep-inflated supporting point of a primitive in world frame.
pub fn support(
    p: &Primitive,
    pose: &Isometry3<f64>,
    direction: &Vector3<f64>,
) -> Result<Point3<f64>, GeometryError> {
    let n2 = direction.norm_squared();
    if n2 == 0.0 || !n2.is_finite() {
        return Err(GeometryError::ZeroDirection);
    }
    let unit = direction / n2.sqrt();
    let world = p.world_vertices(pose);
    let (_, core) = p.support_core(&world, &unit);
    Ok(core + unit * p.sweep_radius())
}

/// Distance, witness points, and per-vertex distance gradients for a pair of
/// posed primitives.
///
/// `distance = |witness_a - witness_b| - sweep_a - sweep_b`; witnesses lie on
/// the core hulls. Gradients are with respect to *world-frame* vertex
/// positions; chaining to poses or joints is the caller's job.
#[derive(Debug, Clone)]
pub struct DistanceResult {
    pub distance: f64,
    pub witness_a: Point3<f64>,
    pub witness_b: Point3<f64>,
    pub grad_vertices_a: Vec<Vector3<f64>>,
    pub grad_vertices_b: Vec<Vector3<f64>>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3<f64>>>(points: I) -> Self {
        let mut iter = points.into_iter();
        let first = *iter.next().expect("aabb needs at least one point");
        let mut aabb = Aabb {
            min: first,
            max: first,
        };
        for p in iter {
            aabb.take_point(p);
        }
        aabb
    }

    pub fn take_point(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        out.take_point(&other.min);
        out.take_point(&other.max);
        out
    }

    pub fn inflate(&mut self, r: f64) {
        debug_assert!(r >= 0.0);
        for k in 0..3 {
            self.min[k] -= r;
            self.max[k] += r;
        }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && self.max[k] >= other.max[k])
    }

    /// Distance between two boxes; zero when they overlap. A lower bound on
    /// the distance between any shapes they enclose.
    pub fn distance_to(&self, other: &Aabb) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let gap = (other.min[k] - self.max[k]).max(self.min[k] - other.max[k]);
            if gap > 0.0 {
                d2 += gap * gap;
            }
        }
        d2.sqrt()
    }

    pub fn longest_axis(&self) -> usize {
        let ext = self.max - self.min;
        let mut axis = 0;
        for k in 1..3 {
            if ext[k] > ext[axis] {
                axis = k;
            }
        }
        axis
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};

    fn ident() -> Isometry3<f64> {
        Isometry3::identity()
    }

    fn pt(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    fn unit_square() -> Primitive {
        Primitive::polytope(vec![
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(1.0, 1.0, 0.0),
            pt(0.0, 1.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn construction_invariants() {
        assert!(matches!(
            Primitive::segment(pt(1.0, 2.0, 3.0), pt(1.0, 2.0, 3.0)),
            Err(GeometryError::DegenerateSegment)
        ));
        assert!(matches!(
            Primitive::polytope(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)]),
            Err(GeometryError::VertexCount { .. })
        ));
        assert!(matches!(
            Primitive::polytope(vec![]),
            Err(GeometryError::EmptyVertices)
        ));
        assert!(Primitive::point(pt(0.0, 0.0, 0.0))
            .with_sweep(-0.1)
            .is_err());
    }

    #[test]
    fn serde_rejects_invalid_primitives() {
        let json = r#"{"kind":"segment","vertices":[[0.0,0.0,0.0],[0.0,0.0,0.0]]}"#;
        assert!(serde_json::from_str::<Primitive>(json).is_err());
        let json = r#"{"kind":"segment","vertices":[[0.0,0.0,0.0],[1.0,0.0,0.0]]}"#;
        let p: Primitive = serde_json::from_str(json).unwrap();
        assert_eq!(p.kind(), PrimitiveKind::Segment);
        assert_eq!(p.sweep_radius(), 0.0);
    }

    #[test]
    fn support_of_segment_and_point() {
        let seg = Primitive::segment(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)).unwrap();
        let s = support(&seg, &ident(), &Vector3::x()).unwrap();
        assert_eq!(s, pt(1.0, 0.0, 0.0));

        let p = Primitive::point(pt(0.3, -0.2, 0.9));
        for dir in [Vector3::x(), Vector3::y(), -Vector3::z(), Vector3::new(1.0, 2.0, 3.0)] {
            assert_eq!(support(&p, &ident(), &dir).unwrap(), pt(0.3, -0.2, 0.9));
        }
    }

    #[test]
    fn support_includes_sweep_offset() {
        let sq = unit_square().with_sweep(0.1).unwrap();
        let s = support(&sq, &ident(), &Vector3::y()).unwrap();
        // A top-edge vertex, shifted outward by the sweep radius. Ties along
        // the top edge break to the lowest vertex index.
        assert_eq!(s, pt(1.0, 1.1, 0.0));
    }

    #[test]
    fn support_zero_direction_is_error() {
        let p = Primitive::point(pt(0.0, 0.0, 0.0));
        assert!(matches!(
            support(&p, &ident(), &Vector3::zeros()),
            Err(GeometryError::ZeroDirection)
        ));
    }

    #[test]
    fn aabb_respects_pose_and_sweep() {
        let seg = Primitive::segment(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0))
            .unwrap()
            .with_sweep(0.25)
            .unwrap();
        let pose = Isometry3::from_parts(
            Translation3::new(0.0, 2.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        let aabb = seg.world_aabb(&pose);
        assert!((aabb.min.y - 1.75).abs() < 1e-12);
        assert!((aabb.max.y - 3.25).abs() < 1e-12);
        assert!((aabb.min.x + 0.25).abs() < 1e-12);
    }

    #[test]
    fn aabb_distance_is_lower_bound() {
        let a = Aabb {
            min: pt(0.0, 0.0, 0.0),
            max: pt(1.0, 1.0, 1.0),
        };
        let b = Aabb {
            min: pt(3.0, 4.0, 0.0),
            max: pt(4.0, 5.0, 1.0),
        };
        assert!((a.distance_to(&b) - (4.0f64 + 9.0).sqrt()).abs() < 1e-12);
        let c = Aabb {
            min: pt(0.5, 0.5, 0.5),
            max: pt(2.0, 2.0, 2.0),
        };
        assert_eq!(a.distance_to(&c), 0.0);
    }
}
