//! The spherical Kepler problem described through its projected ellipse.
//!
//! An orbit on the sphere of radius `R` is labelled by the elements `(a, e)` of
//! its central projection. Physical time `t` and Kepler time `tau` of the
//! projection are related by `dt = h^2 dtau = dtau / (1 + r^2 / R^2)`, so the
//! passing time along an arc is
//!
//! ```text
//! t(u1 -> u2) = integral over [u1, u2] of a^(3/2) w / (1 + (a/R)^2 w^2) du,   w = 1 - e cos u.
//! ```
//!
//! The conserved energy is `-1/(2a) + a (1 - e^2) / (2 R^2)`. On the unit
//! sphere the period depends on it alone:
//! `T = pi sqrt(E + sqrt(E^2 + 1)) / sqrt(E^2 + 1)`.

use std::f64::consts::{PI, SQRT_2, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flat::{AnomalyArc, EllipticElements};
use crate::projection::{central_angle, ProjectionContext};
use crate::quadrature::{adaptive_simpson, periodic_trapezoid};

/// Absolute tolerance for partial-arc passing times.
pub const ARC_TOLERANCE: f64 = 1e-12;
/// Convergence threshold of the full-period trapezoidal rule.
pub const PERIOD_TOLERANCE: f64 = 1e-13;

/// Conserved energy of the spherical problem on a sphere of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalEnergy {
    value: f64,
    radius: f64,
}

impl SphericalEnergy {
    pub fn new(value: f64, radius: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("energy must be finite, got {value}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { value, radius })
    }

    /// Energy on the unit sphere.
    pub fn unit(value: f64) -> Result<Self> {
        Self::new(value, 1.0)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn require_unit_sphere(&self) -> Result<()> {
        if self.radius == 1.0 {
            Ok(())
        } else {
            Err(Error::UnsupportedRadius { radius: self.radius })
        }
    }
}

/// `E_sph = -1/(2a) + a (1 - e^2) / (2 R^2)`, i.e. the flat energy plus `C^2 / (2 R^2)`.
pub fn spherical_energy(elems: &EllipticElements, radius: f64) -> Result<SphericalEnergy> {
    let value = elems.flat_energy() + elems.angular_momentum_sq() / (2.0 * radius * radius);
    SphericalEnergy::new(value, radius)
}

/// The ellipse of eccentricity `e` carrying energy `energy`: the positive root of
/// `a^2 (1 - e^2) / R^2 - 2 a E - 1 = 0`.
pub fn elements_family_from_energy(energy: &SphericalEnergy, e: f64) -> Result<EllipticElements> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidInput(format!("eccentricity must lie in [0, 1), got {e}")));
    }
    let w = (1.0 - e * e) / (energy.radius * energy.radius);
    let en = energy.value;
    let root = (en * en + w).sqrt();
    // Pick the cancellation-free form of the same root.
    let a = if en > 0.0 { (en + root) / w } else { 1.0 / (root - en) };
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::NoSolution(format!("no positive semi major axis for E = {en}, e = {e}")));
    }
    EllipticElements::new(a, e)
}

/// Maximal central angle `theta_a` of the spherical ellipse, in `(0, pi)`, with
/// `tan theta_a = -1 / (R E)`.
pub fn geodesic_major_angle(energy: &SphericalEnergy) -> f64 {
    1f64.atan2(-energy.radius * energy.value)
}

/// `theta_a` measured directly on the lifted orbit: the central angles of the
/// pericenter and the apocenter seen from the sphere center add up.
pub fn major_angle_from_elements(elems: &EllipticElements, radius: f64) -> f64 {
    let (a, e) = (elems.a(), elems.e());
    (a * (1.0 - e) / radius).atan() + (a * (1.0 + e) / radius).atan()
}

fn spherical_integrand(elems: &EllipticElements, radius: f64) -> impl Fn(f64) -> f64 {
    let scale = elems.a().powf(1.5);
    let ratio = elems.a() / radius;
    let e = elems.e();
    move |u: f64| {
        let w = 1.0 - e * u.cos();
        let rw = ratio * w;
        scale * w / (1.0 + rw * rw)
    }
}

/// Physical passing time along `arc` on the sphere of radius `radius`.
pub fn passing_time_spherical(elems: &EllipticElements, arc: &AnomalyArc, radius: f64) -> Result<f64> {
    passing_time_spherical_with_tolerance(elems, arc, radius, ARC_TOLERANCE)
}

/// [`passing_time_spherical`] with an explicit absolute quadrature tolerance.
pub fn passing_time_spherical_with_tolerance(
    elems: &EllipticElements,
    arc: &AnomalyArc,
    radius: f64,
    tolerance: f64,
) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    adaptive_simpson(spherical_integrand(elems, radius), arc.u1, arc.u2, tolerance)
}

/// Closed-form period on the unit sphere.
pub fn spherical_period_closed(energy: &SphericalEnergy) -> Result<f64> {
    energy.require_unit_sphere()?;
    let en = energy.value;
    let root = (en * en + 1.0).sqrt();
    // E + sqrt(E^2 + 1) without cancellation for negative E.
    let inner = if en >= 0.0 { en + root } else { 1.0 / (root - en) };
    Ok(PI * inner.sqrt() / root)
}

/// Two-term complex form `(pi / sqrt 2) (1 / sqrt(E + i) + 1 / sqrt(E - i))`
/// with principal square roots; a cross-check of [`spherical_period_closed`].
pub fn spherical_period_complex(energy: &SphericalEnergy) -> Result<f64> {
    energy.require_unit_sphere()?;
    let plus = Complex64::new(energy.value, 1.0).sqrt();
    let minus = Complex64::new(energy.value, -1.0).sqrt();
    let total = (plus.inv() + minus.inv()) * (PI / SQRT_2);
    Ok(total.re)
}

/// Full-period quadrature of the unit-sphere passing time.
pub fn spherical_period_quadrature(elems: &EllipticElements) -> Result<f64> {
    periodic_trapezoid(spherical_integrand(elems, 1.0), 0.0, TAU, PERIOD_TOLERANCE)
}

/// Central angles pole-to-first, pole-to-second and first-to-second endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicTriangle {
    pub theta1: f64,
    pub theta2: f64,
    pub theta12: f64,
}

impl GeodesicTriangle {
    /// Requires angles in `[0, pi)` obeying the spherical triangle inequality.
    pub fn new(theta1: f64, theta2: f64, theta12: f64) -> Result<Self> {
        let in_range = |x: f64| (0.0..PI).contains(&x);
        if !(in_range(theta1) && in_range(theta2) && in_range(theta12)) {
            return Err(Error::InvalidInput("central angles must lie in [0, pi)".into()));
        }
        let slack = 1e-12;
        if theta12 > theta1 + theta2 + slack || theta12 < (theta1 - theta2).abs() - slack {
            return Err(Error::InvalidInput("angles violate the spherical triangle inequality".into()));
        }
        Ok(Self { theta1, theta2, theta12 })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta12]
    }
}

/// Geodesic triangle spanned by the pole and the lifted endpoints of `arc`.
pub fn geodesic_triangle_from_arc(
    elems: &EllipticElements,
    arc: &AnomalyArc,
    radius: f64,
) -> Result<GeodesicTriangle> {
    let ctx = ProjectionContext::polar(radius)?;
    let q1 = ctx.lift(&elems.position(arc.u1)).vector();
    let q2 = ctx.lift(&elems.position(arc.u2)).vector();
    Ok(GeodesicTriangle {
        theta1: (elems.radius(arc.u1) / radius).atan(),
        theta2: (elems.radius(arc.u2) / radius).atan(),
        theta12: central_angle(&q1, &q2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat::passing_time_flat;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn el(a: f64, e: f64) -> EllipticElements {
        EllipticElements::new(a, e).unwrap()
    }

    fn arc(u1: f64, u2: f64) -> AnomalyArc {
        AnomalyArc::new(u1, u2).unwrap()
    }

    fn unit(v: f64) -> SphericalEnergy {
        SphericalEnergy::unit(v).unwrap()
    }

    #[test]
    fn energy_examples() {
        assert_eq!(spherical_energy(&el(1.0, 0.0), 1.0).unwrap().value(), 0.0);
        assert_relative_eq!(spherical_energy(&el(1.0, 0.5), 1.0).unwrap().value(), -0.125);
        let far = spherical_energy(&el(2.0, 0.3), 1e8).unwrap().value();
        assert!((far - (-0.25)).abs() <= 1e-15);
    }

    #[test]
    fn family_examples() {
        assert_relative_eq!(elements_family_from_energy(&unit(0.0), 0.0).unwrap().a(), 1.0);
        let e = 0.6f64;
        let a = elements_family_from_energy(&unit(0.0), e).unwrap().a();
        assert_relative_eq!(a, (1.0 - e * e).powf(-0.5), epsilon = 1e-15);
        let fam = elements_family_from_energy(&unit(-10.0), 0.0).unwrap();
        assert_relative_eq!(fam.a(), -10.0 + 101f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(fam.a(), 0.049_875_621_120_889_946, epsilon = 1e-15);
        assert_relative_eq!(spherical_energy(&fam, 1.0).unwrap().value(), -10.0, epsilon = 1e-12);
        assert!(elements_family_from_energy(&unit(0.0), 1.0).is_err());
    }

    #[test]
    fn major_angle_examples() {
        assert_relative_eq!(geodesic_major_angle(&unit(0.0)), FRAC_PI_2);
        assert_relative_eq!(geodesic_major_angle(&unit(-1.0)), FRAC_PI_4);
        assert_relative_eq!(geodesic_major_angle(&unit(1.0)), 3.0 * FRAC_PI_4);
        let theta = geodesic_major_angle(&unit(1.0));
        assert_relative_eq!(theta.tan(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn passing_time_examples() {
        let t = passing_time_spherical(&el(1.0, 0.0), &arc(0.0, PI), 1.0).unwrap();
        assert_relative_eq!(t, FRAC_PI_2, epsilon = 1e-14);
        let back = passing_time_spherical(&el(1.0, 0.0), &arc(PI, 0.0), 1.0).unwrap();
        assert_eq!(back, -t);

        let o = el(1.0, 0.5);
        let a_ = arc(0.3, 1.2);
        let sph = passing_time_spherical(&o, &a_, 1e3).unwrap();
        let flat = passing_time_flat(&o, &a_);
        assert!(((sph - flat) / flat).abs() < 3e-6);

        let full = passing_time_spherical(&el(1.0, 0.0), &arc(0.0, TAU), 1.0).unwrap();
        assert_relative_eq!(full, spherical_period_closed(&unit(0.0)).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn period_examples() {
        assert_eq!(spherical_period_closed(&unit(0.0)).unwrap(), PI);
        assert_relative_eq!(spherical_period_quadrature(&el(1.0, 0.0)).unwrap(), PI, epsilon = 1e-13);
        for (a, e, en) in [(1.0, 0.5, -0.125), (2.0, 0.9, -0.06)] {
            let o = el(a, e);
            let energy = spherical_energy(&o, 1.0).unwrap();
            assert_relative_eq!(energy.value(), en, epsilon = 1e-15);
            let closed = spherical_period_closed(&energy).unwrap();
            let quad = spherical_period_quadrature(&o).unwrap();
            assert!((closed - quad).abs() < 1e-10, "{a} {e}: {closed} vs {quad}");
        }
    }

    #[test]
    fn period_rejects_other_radii() {
        let energy = SphericalEnergy::new(0.0, 2.0).unwrap();
        assert!(matches!(spherical_period_closed(&energy), Err(Error::UnsupportedRadius { .. })));
        assert!(matches!(spherical_period_complex(&energy), Err(Error::UnsupportedRadius { .. })));
    }

    #[test]
    fn circular_family_identity() {
        // For e = 0 the quadrature is 2 pi a^(3/2) / (1 + a^2), and 1 + a^2 = 2 a sqrt(E^2 + 1).
        for k in 0..=40 {
            let en = -10.0 + 0.5 * k as f64;
            let o = elements_family_from_energy(&unit(en), 0.0).unwrap();
            let a = o.a();
            let direct = TAU * a.powf(1.5) / (1.0 + a * a);
            let closed = spherical_period_closed(&unit(en)).unwrap();
            assert_relative_eq!(direct, closed, max_relative = 1e-13);
            assert_relative_eq!(1.0 + a * a, 2.0 * a * (en * en + 1.0).sqrt(), max_relative = 1e-13);
        }
    }

    #[test]
    fn deep_negative_energy_approaches_kepler() {
        let en = -1e3;
        let o = elements_family_from_energy(&unit(en), 0.0).unwrap();
        let t = spherical_period_closed(&unit(en)).unwrap();
        assert_relative_eq!(t / (TAU * o.a().powf(1.5)), 1.0, max_relative = 1e-5);
        assert_relative_eq!(o.a() * (-2.0 * en), 1.0, max_relative = 1e-5);
    }

    #[test]
    fn complex_form_matches_real_form() {
        for k in 0..=80 {
            let en = -20.0 + 0.5 * k as f64;
            let real = spherical_period_closed(&unit(en)).unwrap();
            let complex = spherical_period_complex(&unit(en)).unwrap();
            assert_relative_eq!(real, complex, max_relative = 1e-12);
        }
    }

    #[test]
    fn triangle_examples() {
        let g = geodesic_triangle_from_arc(&el(1.0, 0.5), &arc(0.0, PI), 1.0).unwrap();
        assert_relative_eq!(g.theta1, 0.5f64.atan(), epsilon = 1e-15);
        assert_relative_eq!(g.theta1, 0.463_647_609_000_806_1, epsilon = 1e-15);
        assert_relative_eq!(g.theta2, 0.982_793_723_247_329, epsilon = 1e-15);
        assert_relative_eq!(g.theta12, g.theta1 + g.theta2, epsilon = 1e-14);
        assert!(GeodesicTriangle::new(g.theta1, g.theta2, g.theta12).is_ok());

        let g = geodesic_triangle_from_arc(&el(1.0, 0.5), &arc(0.7, 0.7), 1.0).unwrap();
        assert_eq!(g.theta12, 0.0);
    }

    #[test]
    fn triangle_flat_limit() {
        let o = el(1.3, 0.4);
        let a_ = arc(0.2, 2.1);
        let r = 1e6;
        let g = geodesic_triangle_from_arc(&o, &a_, r).unwrap();
        let flat = crate::flat::ChordSumTriple::from_arc(&o, &a_);
        assert_relative_eq!(r * g.theta1, flat.r1, max_relative = 1e-10);
        assert_relative_eq!(r * g.theta2, flat.r2, max_relative = 1e-10);
        assert_relative_eq!(r * g.theta12, flat.c, max_relative = 1e-8);
    }

    #[test]
    fn triangle_validation() {
        assert!(GeodesicTriangle::new(0.1, 0.2, 0.5).is_err());
        assert!(GeodesicTriangle::new(0.1, 0.5, 0.2).is_err());
        assert!(GeodesicTriangle::new(0.1, 0.5, PI).is_err());
    }

    proptest! {
        #[test]
        fn additivity(a in 0.1f64..5.0, e in 0.0f64..0.95, u1 in -6.0f64..6.0, u2 in -6.0f64..6.0, u3 in -6.0f64..6.0) {
            let o = el(a, e);
            let t13 = passing_time_spherical(&o, &arc(u1, u3), 1.0).unwrap();
            let t12 = passing_time_spherical(&o, &arc(u1, u2), 1.0).unwrap();
            let t23 = passing_time_spherical(&o, &arc(u2, u3), 1.0).unwrap();
            prop_assert!((t13 - t12 - t23).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_endpoint(a in 0.1f64..5.0, e in 0.0f64..0.95, u1 in -3.0f64..3.0, d in 1e-3f64..3.0, extra in 1e-3f64..1.0) {
            let o = el(a, e);
            let t1 = passing_time_spherical(&o, &arc(u1, u1 + d), 1.0).unwrap();
            let t2 = passing_time_spherical(&o, &arc(u1, u1 + d + extra), 1.0).unwrap();
            prop_assert!(t2 > t1);
        }

        #[test]
        fn energy_family_round_trip(en in -20.0f64..20.0, e in 0.0f64..0.99) {
            let o = elements_family_from_energy(&unit(en), e).unwrap();
            let back = spherical_energy(&o, 1.0).unwrap().value();
            prop_assert!((back - en).abs() <= 1e-12 * en.abs().max(1.0));
        }

        #[test]
        fn energy_family_round_trip_general_radius(en in -5.0f64..5.0, e in 0.0f64..0.99, r in 0.2f64..5.0) {
            let energy = SphericalEnergy::new(en, r).unwrap();
            let o = elements_family_from_energy(&energy, e).unwrap();
            let back = spherical_energy(&o, r).unwrap().value();
            prop_assert!((back - en).abs() <= 1e-12 * en.abs().max(1.0));
        }

        #[test]
        fn major_angle_consistency(a in 0.05f64..20.0, e in 0.0f64..0.99) {
            let o = el(a, e);
            let from_energy = geodesic_major_angle(&spherical_energy(&o, 1.0).unwrap());
            let measured = major_angle_from_elements(&o, 1.0);
            prop_assert!((from_energy - measured).abs() < 1e-12);
        }

        #[test]
        fn major_angle_range(en in -50.0f64..50.0) {
            let t = geodesic_major_angle(&unit(en));
            prop_assert!(t > 0.0 && t < PI);
            prop_assert!((t.tan() + 1.0 / en).abs() <= 1e-9 * (1.0 / en).abs().max(1.0));
        }

        #[test]
        fn period_depends_only_on_energy(en in -5.0f64..5.0, e1 in 0.0f64..0.95, e2 in 0.0f64..0.95) {
            let p1 = spherical_period_quadrature(&elements_family_from_energy(&unit(en), e1).unwrap()).unwrap();
            let p2 = spherical_period_quadrature(&elements_family_from_energy(&unit(en), e2).unwrap()).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-10);
        }
    }
}
