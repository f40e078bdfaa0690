//! The planar Kepler problem in `E`: elements, eccentric-anomaly positions,
//! passing time, Lagrange's angles and Lambert branch enumeration.
//!
//! Units have the attracting mass set to one, so the period of an ellipse with
//! semi major axis `a` is `2 pi a^(3/2)`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::projection::PlanePoint;

/// Semi major axis and eccentricity of a Keplerian ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticElements {
    a: f64,
    e: f64,
}

impl EllipticElements {
    /// Requires `a > 0` and `0 <= e < 1`.
    pub fn new(a: f64, e: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidInput(format!("semi major axis must be positive, got {a}")));
        }
        if !(0.0..1.0).contains(&e) {
            return Err(Error::InvalidInput(format!("eccentricity must lie in [0, 1), got {e}")));
        }
        Ok(Self { a, e })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    /// Keplerian energy `-1 / (2a)`.
    pub fn flat_energy(&self) -> f64 {
        -0.5 / self.a
    }

    /// Squared angular momentum `C^2 = a (1 - e^2)`.
    pub fn angular_momentum_sq(&self) -> f64 {
        self.a * (1.0 - self.e * self.e)
    }

    /// `2 pi a^(3/2)`.
    pub fn period(&self) -> f64 {
        TAU * self.a.powf(1.5)
    }

    /// Focus-centered position at eccentric anomaly `u`, pericenter on the first axis.
    pub fn position(&self, u: f64) -> PlanePoint {
        let (s, c) = u.sin_cos();
        let b = self.a * (1.0 - self.e * self.e).sqrt();
        PlanePoint::new(self.a * (c - self.e), b * s)
    }

    /// Distance to the focus, `a (1 - e cos u)`.
    pub fn radius(&self, u: f64) -> f64 {
        self.a * (1.0 - self.e * u.cos())
    }

    /// Velocity with respect to Kepler time at eccentric anomaly `u`.
    pub fn velocity(&self, u: f64) -> Vector2<f64> {
        let (s, c) = u.sin_cos();
        let b = self.a * (1.0 - self.e * self.e).sqrt();
        let rate = 1.0 / (self.a.powf(1.5) * (1.0 - self.e * c));
        Vector2::new(-self.a * s, b * c) * rate
    }
}

/// Flat energy of the ellipse; see [`EllipticElements::flat_energy`].
pub fn flat_energy(elems: &EllipticElements) -> f64 {
    elems.flat_energy()
}

/// See [`EllipticElements::position`].
pub fn position_from_anomaly(elems: &EllipticElements, u: f64) -> PlanePoint {
    elems.position(u)
}

/// Oriented arc between two eccentric anomalies. Any real values are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyArc {
    pub u1: f64,
    pub u2: f64,
}

impl AnomalyArc {
    pub fn new(u1: f64, u2: f64) -> Result<Self> {
        if !(u1.is_finite() && u2.is_finite()) {
            return Err(Error::InvalidInput("anomalies must be finite".into()));
        }
        Ok(Self { u1, u2 })
    }

    pub fn span(&self) -> f64 {
        self.u2 - self.u1
    }

    /// `+1` for forward arcs (including empty ones), `-1` otherwise.
    pub fn orientation(&self) -> i8 {
        if self.u2 >= self.u1 {
            1
        } else {
            -1
        }
    }

    /// Number of completed revolutions, `floor(|u2 - u1| / 2 pi)`.
    pub fn revolutions(&self) -> i64 {
        (self.span().abs() / TAU).floor() as i64
    }
}

/// Passing time `a^(3/2) [(u2 - u1) - e (sin u2 - sin u1)]` along an arc.
pub fn passing_time_flat(elems: &EllipticElements, arc: &AnomalyArc) -> f64 {
    let half_sum = 0.5 * (arc.u1 + arc.u2);
    let half_span = 0.5 * (arc.u2 - arc.u1);
    // sin u2 - sin u1 written as a product to avoid cancellation on short arcs.
    let sine_gap = 2.0 * half_sum.cos() * half_span.sin();
    elems.a.powf(1.5) * ((arc.u2 - arc.u1) - elems.e * sine_gap)
}

/// Lagrange's angles `(phi, psi)` of an arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeAngles {
    pub phi: f64,
    pub psi: f64,
}

impl LagrangeAngles {
    /// Same angles with `psi` reduced to `(-pi, pi]`.
    pub fn normalized(&self) -> Self {
        Self { phi: self.phi, psi: wrap_angle(self.psi) }
    }
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x - TAU * (x / TAU).round();
    if r <= -PI {
        r + TAU
    } else if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `phi = arccos(e cos((u1 + u2) / 2))`, `psi = (u1 - u2) / 2`.
///
/// Two-to-one: `(u1, u2)` and `(-u2, -u1)` give the same angles.
pub fn lagrange_angles(arc: &AnomalyArc, e: f64) -> LagrangeAngles {
    let phi = (e * (0.5 * (arc.u1 + arc.u2)).cos()).clamp(-1.0, 1.0).acos();
    LagrangeAngles { phi, psi: 0.5 * (arc.u1 - arc.u2) }
}

/// An arc of eccentricity `e` with the given Lagrange angles, if one exists
/// (it does when `e >= |cos phi|`). Arcs sharing `a` and `(phi, psi)` share
/// `r1 + r2`, `c` and the passing time.
pub fn arc_from_lagrange_angles(angles: &LagrangeAngles, e: f64) -> Option<AnomalyArc> {
    let ratio = angles.phi.cos() / e;
    if !(0.0..1.0).contains(&e) || !(ratio.abs() <= 1.0) {
        return None;
    }
    let half_sum = ratio.acos();
    Some(AnomalyArc { u1: half_sum + angles.psi, u2: half_sum - angles.psi })
}

/// Passing time in Lagrange's variables, `a^(3/2) (-2 psi + 2 sin psi cos phi)`.
pub fn passing_time_lagrange(a: f64, angles: &LagrangeAngles) -> f64 {
    a.powf(1.5) * (-2.0 * angles.psi + 2.0 * angles.psi.sin() * angles.phi.cos())
}

/// Returns `(r1 + r2, c)` from Lagrange's angles.
pub fn chord_and_sum(a: f64, angles: &LagrangeAngles) -> (f64, f64) {
    let sum = 2.0 * a * (1.0 - angles.psi.cos() * angles.phi.cos());
    let chord = 2.0 * a * (angles.psi.sin() * angles.phi.sin()).abs();
    (sum, chord)
}

/// Focal distances of two points and the chord between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChordSumTriple {
    pub r1: f64,
    pub r2: f64,
    pub c: f64,
}

impl ChordSumTriple {
    /// Requires positive radii and the triangle inequality `|r1 - r2| <= c <= r1 + r2`.
    pub fn new(r1: f64, r2: f64, c: f64) -> Result<Self> {
        let slack = 1e-12 * (r1 + r2);
        if !(r1 > 0.0 && r2 > 0.0 && c >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid distances ({r1}, {r2}, {c})")));
        }
        if c > r1 + r2 + slack || c < (r1 - r2).abs() - slack {
            return Err(Error::InvalidInput(format!(
                "distances ({r1}, {r2}, {c}) violate the triangle inequality"
            )));
        }
        Ok(Self { r1, r2, c })
    }

    /// Euclidean distances of the arc endpoints, measured on the ellipse.
    pub fn from_arc(elems: &EllipticElements, arc: &AnomalyArc) -> Self {
        let p1 = elems.position(arc.u1);
        let p2 = elems.position(arc.u2);
        Self { r1: p1.norm(), r2: p2.norm(), c: (p1.coords() - p2.coords()).norm() }
    }

    pub fn sum(&self) -> f64 {
        self.r1 + self.r2
    }
}

/// Which degenerate regime, if any, a Lambert branch touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BranchFlags {
    /// `sin psi = 0`: the endpoints coincide.
    pub coincident_endpoints: bool,
    /// `cos phi = 0`: the circular orbit is among the preimages.
    pub circular_preimage: bool,
    /// `sin phi = 0`: only a rectilinear (e = 1) orbit realizes the branch.
    pub rectilinear: bool,
}

impl BranchFlags {
    pub fn any(&self) -> bool {
        self.coincident_endpoints || self.circular_preimage || self.rectilinear
    }
}

/// One sheet of the multivalued passing time for given `(r1 + r2, c, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertBranch {
    /// `phi` in `[0, pi]`, `psi` in `(-pi, pi]`.
    pub angles: LagrangeAngles,
    /// Passing time reduced to one revolution, in `[0, 2 pi a^(3/2))`.
    pub time: f64,
    /// Unreduced `passing_time_lagrange` of `angles`.
    pub raw_time: f64,
    /// Sign of `raw_time`.
    pub orientation: i8,
    /// `floor(raw_time / period)`.
    pub revolutions: i64,
    pub flags: BranchFlags,
}

const BRANCH_DEDUP: f64 = 1e-10;
const BRANCH_RESIDUAL: f64 = 1e-9;
const FLAG_TOLERANCE: f64 = 1e-12;

/// Enumerates every `(phi, psi)` solving
/// `cos psi cos phi = 1 - sum / (2a)` and `sin psi sin phi = +-c / (2a)`,
/// together with the passing time of each branch.
///
/// The system is solved through the sum and difference angles
/// `phi - psi` and `phi + psi`, whose cosines are `k +- m` and `k -+ m`.
pub fn lambert_branches(sum: f64, c: f64, a: f64) -> Result<Vec<LambertBranch>> {
    if !(sum.is_finite() && c.is_finite() && a.is_finite()) || !(a > 0.0) {
        return Err(Error::InvalidInput(format!("invalid Lambert input ({sum}, {c}, {a})")));
    }
    if sum == 0.0 && c == 0.0 {
        return Err(Error::DegenerateInput("both endpoints at the attracting center".into()));
    }
    if !(sum > 0.0) || c < 0.0 || c > sum * (1.0 + 1e-14) {
        return Err(Error::NoSolution(format!("chord {c} incompatible with r1 + r2 = {sum}")));
    }
    let k = 1.0 - sum / (2.0 * a);
    let m = c / (2.0 * a);
    if k - m < -1.0 - 1e-14 {
        return Err(Error::NoSolution(format!(
            "r1 + r2 + c = {} exceeds 4a = {}",
            sum + c,
            4.0 * a
        )));
    }

    let period = TAU * a.powf(1.5);
    let mut found: Vec<LagrangeAngles> = Vec::new();
    for sigma in [1.0, -1.0] {
        let alpha = (k + sigma * m).clamp(-1.0, 1.0).acos();
        let beta = (k - sigma * m).clamp(-1.0, 1.0).acos();
        for diff in [alpha, -alpha] {
            for total in [beta, -beta] {
                for j in -2..=2 {
                    for l in -2..=2 {
                        let d = diff + TAU * j as f64;
                        let t = total + TAU * l as f64;
                        let phi = 0.5 * (d + t);
                        if !(-BRANCH_DEDUP..=PI + BRANCH_DEDUP).contains(&phi) {
                            continue;
                        }
                        let candidate = LagrangeAngles {
                            phi: phi.clamp(0.0, PI),
                            psi: wrap_angle(0.5 * (t - d)),
                        };
                        let (cp, sp) = (candidate.phi.cos(), candidate.phi.sin());
                        let (cs, ss) = (candidate.psi.cos(), candidate.psi.sin());
                        if (cs * cp - k).abs() > BRANCH_RESIDUAL
                            || (ss * sp - sigma * m).abs() > BRANCH_RESIDUAL
                        {
                            continue;
                        }
                        if !found.iter().any(|f| same_angles(f, &candidate)) {
                            found.push(candidate);
                        }
                    }
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoSolution("trigonometric system has no solution".into()));
    }
    found.sort_by(|x, y| x.phi.total_cmp(&y.phi).then(x.psi.total_cmp(&y.psi)));

    Ok(found
        .into_iter()
        .map(|angles| {
            let raw_time = passing_time_lagrange(a, &angles);
            let revolutions = (raw_time / period).floor();
            let time = (raw_time - revolutions * period).clamp(0.0, period);
            let time = if time >= period { 0.0 } else { time };
            LambertBranch {
                angles,
                time,
                raw_time,
                orientation: if raw_time >= 0.0 { 1 } else { -1 },
                revolutions: revolutions as i64,
                flags: BranchFlags {
                    coincident_endpoints: angles.psi.sin().abs() < FLAG_TOLERANCE,
                    circular_preimage: angles.phi.cos().abs() < FLAG_TOLERANCE,
                    rectilinear: angles.phi.sin().abs() < FLAG_TOLERANCE,
                },
            }
        })
        .collect())
}

fn same_angles(x: &LagrangeAngles, y: &LagrangeAngles) -> bool {
    (x.phi - y.phi).abs() < BRANCH_DEDUP && wrap_angle(x.psi - y.psi).abs() < BRANCH_DEDUP
}

const KEPLER_TOLERANCE: f64 = 1e-13;
const KEPLER_MAX_ITERATIONS: usize = 50;

/// Eccentric anomaly `u` with `u - e sin u = mean_anomaly`, by Newton iteration
/// from `u0 = M + e sin M`.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    if !mean_anomaly.is_finite() || !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidInput(format!("invalid Kepler input ({mean_anomaly}, {e})")));
    }
    let turns = (mean_anomaly / TAU).floor();
    let m = mean_anomaly - turns * TAU;
    let mut u = m + e * m.sin();
    for _ in 0..KEPLER_MAX_ITERATIONS {
        let step = (u - e * u.sin() - m) / (1.0 - e * u.cos());
        u -= step;
        if step.abs() < KEPLER_TOLERANCE {
            return Ok(u + turns * TAU);
        }
    }
    Err(Error::NoSolution(format!("Kepler equation did not converge for M = {mean_anomaly}, e = {e}")))
}
