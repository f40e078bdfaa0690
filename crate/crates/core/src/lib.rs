//! Planar and spherical Kepler problems and the central projection linking them.
//!
//! * [`projection`]: sphere, tangent plane, central projection, the spherical
//!   force field and its cotangent potential.
//! * [`flat`]: planar elliptic motion, passing time, Lagrange's angles and
//!   Lambert branch enumeration.
//! * [`sphere`]: spherical energy, geodesic major angle, spherical passing time
//!   and the closed-form period.
//! * [`dynamics`]: direct integration of the constrained motion on the sphere,
//!   used to check the projection correspondence numerically.
//! * [`probe`]: level-set scans testing whether the spherical passing time
//!   factors through two functions of the geodesic distances.
//! * [`verify`]: the invariant suites behind the `verify` command.

pub mod dynamics;
pub mod error;
pub mod flat;
pub mod output;
pub mod probe;
pub mod projection;
pub mod quadrature;
pub mod sphere;
pub mod verify;

pub use error::{Error, Result};
pub use flat::{AnomalyArc, ChordSumTriple, EllipticElements, LagrangeAngles, LambertBranch};
pub use projection::{PlanePoint, ProjectionContext, SpherePoint};
pub use sphere::{GeodesicTriangle, SphericalEnergy};
