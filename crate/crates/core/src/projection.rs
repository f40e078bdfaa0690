//! Geometry of the sphere `B(R)`, the tangent plane `E = {q : <Z, q> = R}` and the
//! central (gnomonic) projection between the open northern hemisphere and `E`.
//!
//! The attracting center is the pole `O = R Z`, which is also the contact point of
//! the plane with the sphere. Planar coordinates are focus centered: a point of `E`
//! is stored as `Q = q_E - R Z`, expressed in an orthonormal frame `(e1, e2)` of
//! `E` that is fixed once per [`ProjectionContext`].
//!
//! The spherical Kepler field is `b(q) Z_B` with `Z_B = Z - (h / R) q` and
//! `b = R^-2 (1 - h^2)^(-3/2)`, where `h = <Z, q> / R`. Its potential is the
//! cotangent potential `U = -h / (R sqrt(1 - h^2))`, so that the field equals
//! `-grad U` along the sphere.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

/// `|1 - |h||` below this is treated as a pole.
pub const POLE_TOLERANCE: f64 = 1e-12;

const UNIT_NORMAL_TOLERANCE: f64 = 1e-14;
const ON_SURFACE_TOLERANCE: f64 = 1e-12;

/// Sphere radius, pole direction and the planar frame derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionContext {
    radius: f64,
    normal: Vector3<f64>,
    frame: [Vector3<f64>; 2],
}

impl ProjectionContext {
    /// Builds a context from a radius and a unit normal.
    pub fn new(radius: f64, normal: Vector3<f64>) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        if !normal.iter().all(|c| c.is_finite())
            || (normal.norm() - 1.0).abs() > UNIT_NORMAL_TOLERANCE
        {
            return Err(Error::InvalidInput(format!(
                "normal must have unit length, got |Z| = {}",
                normal.norm()
            )));
        }
        Ok(Self { radius, normal, frame: complete_frame(&normal) })
    }

    /// Context with the pole on the positive z axis.
    pub fn polar(radius: f64) -> Result<Self> {
        Self::new(radius, Vector3::z())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    /// Orthonormal basis `(e1, e2)` of the plane, with `e1 x e2 = Z`.
    pub fn frame(&self) -> [Vector3<f64>; 2] {
        self.frame
    }

    /// The attracting center `O = R Z`.
    pub fn pole(&self) -> Vector3<f64> {
        self.normal * self.radius
    }

    /// Normalized height `h = <Z, q> / R`, the cosine of the colatitude.
    pub fn height(&self, q: &SpherePoint) -> f64 {
        self.height_of(&q.0)
    }

    pub(crate) fn height_of(&self, q: &Vector3<f64>) -> f64 {
        self.normal.dot(q) / self.radius
    }

    /// Central projection `q -> q / h` into the plane.
    pub fn central_project(&self, q: &SpherePoint) -> Result<PlanePoint> {
        self.project_vector(&q.0)
    }

    pub(crate) fn project_vector(&self, q: &Vector3<f64>) -> Result<PlanePoint> {
        let h = self.height_of(q);
        if !(h > 0.0) {
            return Err(Error::Hemisphere { height: h });
        }
        let q_plane = q / h - self.pole();
        Ok(PlanePoint(self.to_frame(&q_plane)))
    }

    /// Inverse of [`central_project`](Self::central_project); total on the plane.
    pub fn lift(&self, point: &PlanePoint) -> SpherePoint {
        let q_plane = self.to_ambient(point);
        let h = self.lift_height(point);
        SpherePoint(q_plane * h)
    }

    /// Height of the lifted point, `h = 1 / sqrt(1 + |Q|^2 / R^2)`.
    pub fn lift_height(&self, point: &PlanePoint) -> f64 {
        let ratio = point.norm() / self.radius;
        1.0 / (1.0 + ratio * ratio).sqrt()
    }

    /// Ambient coordinates `q_E = R Z + Q` of a plane point.
    pub fn to_ambient(&self, point: &PlanePoint) -> Vector3<f64> {
        self.pole() + self.frame[0] * point.0.x + self.frame[1] * point.0.y
    }

    /// Frame coordinates of an ambient vector lying in (or parallel to) the plane.
    pub fn to_frame(&self, v: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.frame[0].dot(v), self.frame[1].dot(v))
    }

    /// Reads a plane point from ambient coordinates; requires `<Z, q_E> = R`.
    pub fn plane_point_from_ambient(&self, q_plane: &Vector3<f64>) -> Result<PlanePoint> {
        let offset = self.normal.dot(q_plane) - self.radius;
        if offset.abs() > ON_SURFACE_TOLERANCE * self.radius {
            return Err(Error::InvalidInput(format!(
                "point is off the plane by {offset:e}"
            )));
        }
        Ok(PlanePoint(self.to_frame(&(q_plane - self.pole()))))
    }

    /// The spherical Kepler force `b Z_B`, tangent to the sphere.
    pub fn sphere_force(&self, q: &SpherePoint) -> Result<Vector3<f64>> {
        self.force_at(&q.0)
    }

    pub(crate) fn force_at(&self, q: &Vector3<f64>) -> Result<Vector3<f64>> {
        let h = self.height_of(q);
        self.check_off_pole(h)?;
        let one_minus = 1.0 - h * h;
        let b = 1.0 / (self.radius * self.radius * one_minus * one_minus.sqrt());
        Ok((self.normal - q * (h / self.radius)) * b)
    }

    /// Cotangent potential `U = -h / (R sqrt(1 - h^2))`.
    pub fn potential(&self, q: &SpherePoint) -> Result<f64> {
        self.potential_at(&q.0)
    }

    pub(crate) fn potential_at(&self, q: &Vector3<f64>) -> Result<f64> {
        let h = self.height_of(q);
        self.check_off_pole(h)?;
        Ok(-h / (self.radius * (1.0 - h * h).sqrt()))
    }

    fn check_off_pole(&self, h: f64) -> Result<()> {
        if (1.0 - h.abs()).abs() < POLE_TOLERANCE || h.abs() > 1.0 {
            Err(Error::PoleSingularity { height: h })
        } else {
            Ok(())
        }
    }
}

/// Deterministic Gram-Schmidt completion of `normal` to a right-handed frame.
fn complete_frame(normal: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let mut axis = 0;
    for i in 1..3 {
        if normal[i].abs() < normal[axis].abs() {
            axis = i;
        }
    }
    let seed = Vector3::ith(axis, 1.0);
    let e1 = (seed - normal * normal.dot(&seed)).normalize();
    let e2 = normal.cross(&e1);
    [e1, e2]
}

/// A point on the sphere `B(R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(Vector3<f64>);

impl SpherePoint {
    /// Validates `|q| = R` to within `1e-12 R`.
    pub fn new(ctx: &ProjectionContext, q: Vector3<f64>) -> Result<Self> {
        let r = ctx.radius();
        if !q.iter().all(|c| c.is_finite()) || (q.norm() - r).abs() > ON_SURFACE_TOLERANCE * r {
            return Err(Error::InvalidInput(format!(
                "point is not on the sphere: |q| = {}, R = {r}",
                q.norm()
            )));
        }
        Ok(Self(q))
    }

    /// Scales a nonzero direction onto the sphere.
    pub fn from_direction(ctx: &ProjectionContext, direction: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput("direction must be nonzero".into()));
        }
        Ok(Self(direction * (ctx.radius() / n)))
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }
}

/// A point of the plane `E` in focus-centered frame coordinates `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint(pub Vector2<f64>);

impl PlanePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self(Vector2::new(x, y))
    }

    /// Distance `r = |Q|` to the attracting center.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn coords(&self) -> Vector2<f64> {
        self.0
    }
}

/// Great-circle angle between two ambient vectors.
pub fn central_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
