//! Direct integration of the constrained motion `q'' = b Z_B + lambda q` on the
//! sphere, and the reparametrized projection of the resulting trajectory.
//!
//! This is an independent route to the spherical passing time: nothing here
//! uses the quadrature formula except [`correspondence_residual`], which compares
//! against it. The multiplier is `lambda = -|v|^2 / R^2`, the unique value that
//! keeps `|q| = R` for a tangent force.
//!
//! Integration uses Dormand-Prince 5(4) with per-step projection back onto the
//! sphere and its tangent bundle. Between accepted steps the position is
//! reconstructed by quintic Hermite interpolation from `(q, v, a)` at both ends,
//! which also drives the Kepler-time quadrature `tau = int h^-2 dt`.

use nalgebra::{SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::flat::{passing_time_flat, AnomalyArc, EllipticElements};
use crate::projection::{central_angle, ProjectionContext};
use crate::quadrature::gauss_legendre5;
use crate::sphere::passing_time_spherical;

/// Local error tolerance of the integrator.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Step cap used by [`correspondence_residual`].
pub const DEFAULT_DT_MAX: f64 = 0.05;

const MAX_STEPS: usize = 5_000_000;

type State6 = SVector<f64, 6>;

/// Position, velocity and time of a particle on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereState {
    pub q: Vector3<f64>,
    pub v: Vector3<f64>,
    pub t: f64,
}

impl SphereState {
    /// Validates `|q| = R` and `<q, v> = 0`.
    pub fn new(ctx: &ProjectionContext, q: Vector3<f64>, v: Vector3<f64>, t: f64) -> Result<Self> {
        let r = ctx.radius();
        if (q.norm() - r).abs() > 1e-9 * r || q.dot(&v).abs() > 1e-9 * r * v.norm() {
            return Err(Error::InvalidInput(
                "state must lie on the sphere with a tangent velocity".into(),
            ));
        }
        Ok(Self { q, v, t })
    }

    fn pack(&self) -> State6 {
        State6::from_iterator(self.q.iter().chain(self.v.iter()).copied())
    }

    fn unpack(y: &State6, t: f64) -> Self {
        Self {
            q: Vector3::new(y[0], y[1], y[2]),
            v: Vector3::new(y[3], y[4], y[5]),
            t,
        }
    }
}

/// Acceleration `b Z_B + lambda q` with `lambda = -|v|^2 / R^2`.
pub fn constrained_accel(ctx: &ProjectionContext, state: &SphereState) -> Result<Vector3<f64>> {
    accel(ctx, &state.q, &state.v)
}

fn accel(ctx: &ProjectionContext, q: &Vector3<f64>, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    let r2 = ctx.radius() * ctx.radius();
    Ok(ctx.force_at(q)? - q * (v.norm_squared() / r2))
}

/// Conserved energy `|v|^2 / 2 + U(q)`.
pub fn sphere_energy(ctx: &ProjectionContext, state: &SphereState) -> Result<f64> {
    Ok(0.5 * state.v.norm_squared() + ctx.potential_at(&state.q)?)
}

/// Angular momentum about the pole axis, `<Z, q x v>`.
pub fn axial_momentum(ctx: &ProjectionContext, state: &SphereState) -> f64 {
    ctx.normal().dot(&state.q.cross(&state.v))
}

/// Integrator controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub tolerance: f64,
    pub dt_max: f64,
    /// Project back onto the sphere and its tangent space after every step.
    pub renormalize: bool,
}

impl IntegratorSettings {
    pub fn new(dt_max: f64) -> Self {
        Self { tolerance: DEFAULT_TOLERANCE, dt_max, renormalize: true }
    }
}

/// Accepted integrator states with the accelerations needed for dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    ctx: ProjectionContext,
    states: Vec<SphereState>,
    accels: Vec<Vector3<f64>>,
}

impl Trajectory {
    pub fn states(&self) -> &[SphereState] {
        &self.states
    }

    pub fn context(&self) -> &ProjectionContext {
        &self.ctx
    }

    pub fn last(&self) -> &SphereState {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    fn segment_of(&self, t: f64) -> usize {
        let idx = self.states.partition_point(|s| s.t <= t);
        idx.clamp(1, self.states.len().max(2) - 1) - 1
    }

    /// Quintic Hermite reconstruction of `(q, v)` at time `t` inside the run.
    pub fn interpolate(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.states.len() == 1 {
            return (self.states[0].q, self.states[0].v);
        }
        let i = self.segment_of(t);
        hermite(&self.states[i], &self.accels[i], &self.states[i + 1], &self.accels[i + 1], t)
    }
}

fn hermite(
    s0: &SphereState,
    a0: &Vector3<f64>,
    s1: &SphereState,
    a1: &Vector3<f64>,
    t: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let dt = s1.t - s0.t;
    let s = (t - s0.t) / dt;
    let (s2, s3) = (s * s, s * s * s);
    let (s4, s5) = (s3 * s, s3 * s2);

    let h1 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h0 = 1.0 - h1;
    let g0 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let g1 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let k0 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let k1 = 0.5 * (s3 - 2.0 * s4 + s5);

    let dh1 = 30.0 * s2 - 60.0 * s3 + 30.0 * s4;
    let dg0 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    let dg1 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
    let dk0 = 0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4);
    let dk1 = 0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4);

    let q = s0.q * h0 + s1.q * h1 + (s0.v * g0 + s1.v * g1) * dt + (a0 * k0 + a1 * k1) * (dt * dt);
    let v = (s1.q - s0.q) * (dh1 / dt) + s0.v * dg0 + s1.v * dg1 + (a0 * dk0 + a1 * dk1) * dt;
    (q, v)
}

/// Integrates from `initial` up to `t_end` with the default tolerance.
pub fn integrate_orbit(
    ctx: &ProjectionContext,
    initial: &SphereState,
    t_end: f64,
    dt_max: f64,
) -> Result<Trajectory> {
    integrate_orbit_with(ctx, initial, t_end, &IntegratorSettings::new(dt_max))
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Fifth- minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn rhs(ctx: &ProjectionContext, y: &State6) -> Result<State6> {
    let q = Vector3::new(y[0], y[1], y[2]);
    let v = Vector3::new(y[3], y[4], y[5]);
    let a = accel(ctx, &q, &v)?;
    Ok(State6::from_iterator(v.iter().chain(a.iter()).copied()))
}

/// Integrates with explicit settings. Stops with [`Error::HemisphereExit`] if the
/// particle reaches the equator.
pub fn integrate_orbit_with(
    ctx: &ProjectionContext,
    initial: &SphereState,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    if !(t_end >= initial.t) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} must not precede the initial time {}",
            initial.t
        )));
    }
    if !(settings.dt_max > 0.0 && settings.tolerance > 0.0) {
        return Err(Error::InvalidInput("dt_max and tolerance must be positive".into()));
    }
    if !(ctx.height_of(&initial.q) > 0.0) {
        return Err(Error::HemisphereExit { time: initial.t });
    }

    let radius = ctx.radius();
    let atol = settings.tolerance * radius;
    let rtol = settings.tolerance;

    let mut traj = Trajectory {
        ctx: *ctx,
        states: vec![*initial],
        accels: vec![constrained_accel(ctx, initial)?],
    };
    let mut t = initial.t;
    let mut y = initial.pack();
    let mut dt = settings.dt_max.min(1e-3 * radius).min(t_end - t);
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepFailure { time: t, reason: "step budget exhausted".into() });
        }
        let last = t_end - t <= dt;
        let h = if last { t_end - t } else { dt };
        if h <= 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::StepFailure { time: t, reason: format!("step size underflow ({h:e})") });
        }

        let mut k = [State6::zeros(); 7];
        k[0] = rhs(ctx, &y)?;
        for stage in 1..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                if A[stage][j] != 0.0 {
                    yi += kj * (h * A[stage][j]);
                }
            }
            k[stage] = rhs(ctx, &yi)?;
        }
        let mut y_new = y;
        let mut err = State6::zeros();
        for s in 0..7 {
            y_new += k[s] * (h * B[s]);
            err += k[s] * (h * E[s]);
        }
        let norm = (0..6)
            .map(|i| {
                let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
                (err[i] / scale).powi(2)
            })
            .sum::<f64>()
            / 6.0;
        let norm = norm.sqrt();
        if !norm.is_finite() {
            return Err(Error::StepFailure { time: t, reason: "non-finite error estimate".into() });
        }

        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        if norm <= 1.0 {
            t = if last { t_end } else { t + h };
            let mut state = SphereState::unpack(&y_new, t);
            if settings.renormalize {
                let n = state.q.normalize();
                state.q = n * radius;
                state.v -= n * n.dot(&state.v);
            }
            if !(ctx.height_of(&state.q) > 0.0) {
                return Err(Error::HemisphereExit { time: t });
            }
            y = state.pack();
            traj.accels.push(constrained_accel(ctx, &state)?);
            traj.states.push(state);
            dt = (h * factor).min(settings.dt_max);
        } else {
            dt = h * factor.min(1.0);
        }
    }
    Ok(traj)
}

/// A trajectory sample after projection to the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarSample {
    /// Physical time on the sphere.
    pub t: f64,
    /// Kepler time of the projection.
    pub tau: f64,
    pub q: Vector3<f64>,
    /// Focus-centered plane position `Q`.
    pub position: Vector2<f64>,
    /// `dQ / dtau = h v - h' q`.
    pub velocity: Vector2<f64>,
}

fn inverse_height_sq(ctx: &ProjectionContext, q: &Vector3<f64>) -> f64 {
    let h = ctx.normal().dot(q) / q.norm();
    1.0 / (h * h)
}

/// Projected trajectory with Kepler-time stamps and dense evaluation in `tau`.
#[derive(Debug, Clone)]
pub struct ProjectedTrajectory {
    trajectory: Trajectory,
    samples: Vec<PlanarSample>,
}

impl ProjectedTrajectory {
    pub fn samples(&self) -> &[PlanarSample] {
        &self.samples
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    fn tau_in_segment(&self, i: usize, t: f64) -> f64 {
        let ctx = self.trajectory.context();
        let s0 = &self.trajectory.states[i];
        let s1 = &self.trajectory.states[i + 1];
        let (a0, a1) = (&self.trajectory.accels[i], &self.trajectory.accels[i + 1]);
        self.samples[i].tau
            + gauss_legendre5(|s| inverse_height_sq(ctx, &hermite(s0, a0, s1, a1, s).0), s0.t, t)
    }

    /// Physical time at which the projection reaches Kepler time `tau`.
    pub fn time_at_tau(&self, tau: f64) -> f64 {
        if self.samples.len() == 1 {
            return self.samples[0].t;
        }
        let idx = self.samples.partition_point(|s| s.tau <= tau);
        let i = idx.clamp(1, self.samples.len() - 1) - 1;
        let (lo, hi) = (self.samples[i].t, self.samples[i + 1].t);
        let frac = (tau - self.samples[i].tau) / (self.samples[i + 1].tau - self.samples[i].tau);
        let mut t = lo + frac * (hi - lo);
        for _ in 0..8 {
            let (q, _) = self.trajectory.interpolate(t);
            let residual = self.tau_in_segment(i, t) - tau;
            let step = residual / inverse_height_sq(self.trajectory.context(), &q);
            t -= step;
            if step.abs() <= 1e-15 * t.abs().max(1.0) {
                break;
            }
        }
        t
    }

    /// Projected position `Q` at Kepler time `tau`.
    pub fn position_at_tau(&self, tau: f64) -> Result<Vector2<f64>> {
        let t = self.time_at_tau(tau);
        let (q, _) = self.trajectory.interpolate(t);
        Ok(self.trajectory.context().project_vector(&q)?.coords())
    }

    /// Largest relative deviation `|Q'' + Q / |Q|^3| |Q|^2` from the planar Kepler
    /// equation, with `Q''` taken by central differences in `tau` on the dense output.
    /// The stencil half-width is `1e-3 |Q|^(3/2)`, a fixed fraction of the local
    /// Kepler time scale.
    pub fn kepler_residual(&self) -> Result<f64> {
        let first = self.samples.first().map_or(0.0, |s| s.tau);
        let last = self.samples.last().map_or(0.0, |s| s.tau);
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            let r = s.position.norm();
            let delta = 1e-3 * r.powf(1.5);
            if s.tau - delta < first || s.tau + delta > last {
                continue;
            }
            let center = self.position_at_tau(s.tau)?;
            let plus = self.position_at_tau(s.tau + delta)?;
            let minus = self.position_at_tau(s.tau - delta)?;
            let second = (plus - center * 2.0 + minus) / (delta * delta);
            let rc = center.norm();
            let residual = (second + center / (rc * rc * rc)).norm() * rc * rc;
            worst = worst.max(residual);
        }
        Ok(worst)
    }
}

/// Central projection of every sample, stamped with `tau(t) = int h^-2 dt` and
/// carrying `dQ/dtau`.
pub fn reparametrize_and_project(
    ctx: &ProjectionContext,
    trajectory: &Trajectory,
) -> Result<ProjectedTrajectory> {
    let mut samples = Vec::with_capacity(trajectory.states.len());
    let mut tau = 0.0;
    for (i, state) in trajectory.states.iter().enumerate() {
        if i > 0 {
            let s0 = &trajectory.states[i - 1];
            let (a0, a1) = (&trajectory.accels[i - 1], &trajectory.accels[i]);
            tau += gauss_legendre5(
                |t| inverse_height_sq(ctx, &hermite(s0, a0, state, a1, t).0),
                s0.t,
                state.t,
            );
        }
        let h = ctx.height_of(&state.q);
        if !(h > 0.0) {
            return Err(Error::HemisphereExit { time: state.t });
        }
        let h_dot = ctx.normal().dot(&state.v) / ctx.radius();
        let position = ctx.project_vector(&state.q)?.coords();
        let velocity = ctx.to_frame(&(state.v * h - state.q * h_dot));
        samples.push(PlanarSample { t: state.t, tau, q: state.q, position, velocity });
    }
    Ok(ProjectedTrajectory { trajectory: trajectory.clone(), samples })
}

/// Sphere state over the point of eccentric anomaly `u`, moving along the lifted
/// orbit. Velocities follow `v = h' q_E + (dQ/dtau) / h` with `h' = -h <Q, dQ/dtau> / R^2`.
pub fn lift_state(ctx: &ProjectionContext, elems: &EllipticElements, u: f64, t: f64) -> SphereState {
    let plane = elems.position(u);
    let w = elems.velocity(u);
    let q_plane = ctx.to_ambient(&plane);
    let h = ctx.lift_height(&plane);
    let r2 = ctx.radius() * ctx.radius();
    let h_dot = -h * plane.coords().dot(&w) / r2;
    let [e1, e2] = ctx.frame();
    let w_amb = e1 * w.x + e2 * w.y;
    SphereState { q: q_plane * h, v: q_plane * h_dot + w_amb / h, t }
}

/// Full record of one correspondence run.
#[derive(Debug, Clone)]
pub struct CorrespondenceRun {
    /// Geodesic distance between the integrated and the lifted analytic endpoint.
    pub residual: f64,
    /// Passing time predicted by the quadrature formula.
    pub predicted_time: f64,
    /// Kepler time accumulated along the integrated path.
    pub tau_elapsed: f64,
    /// Kepler time of the planar arc.
    pub expected_tau: f64,
    pub projected: ProjectedTrajectory,
}

/// Lifts the start of `arc`, integrates for the predicted passing time and
/// measures how far the particle lands from the lifted end of `arc`.
///
/// Backward arcs are run with reversed velocity, using time-reversal symmetry.
pub fn run_correspondence(
    ctx: &ProjectionContext,
    elems: &EllipticElements,
    arc: &AnomalyArc,
    settings: &IntegratorSettings,
) -> Result<CorrespondenceRun> {
    let predicted_time = passing_time_spherical(elems, arc, ctx.radius())?;
    let mut start = lift_state(ctx, elems, arc.u1, 0.0);
    if predicted_time < 0.0 {
        start.v = -start.v;
    }
    let trajectory = integrate_orbit_with(ctx, &start, predicted_time.abs(), settings)?;
    let target = ctx.lift(&elems.position(arc.u2)).vector();
    let residual = ctx.radius() * central_angle(&trajectory.last().q, &target);
    let projected = reparametrize_and_project(ctx, &trajectory)?;
    let tau_elapsed = projected.samples.last().map_or(0.0, |s| s.tau);
    Ok(CorrespondenceRun {
        residual,
        predicted_time,
        tau_elapsed,
        expected_tau: passing_time_flat(elems, arc).abs(),
        projected,
    })
}

/// Geodesic endpoint error of [`run_correspondence`] with default settings.
pub fn correspondence_residual(
    ctx: &ProjectionContext,
    elems: &EllipticElements,
    arc: &AnomalyArc,
) -> Result<f64> {
    run_correspondence(ctx, elems, arc, &IntegratorSettings::new(DEFAULT_DT_MAX)).map(|r| r.residual)
}

/// Worst-case drift of the conserved quantities along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Drift {
    pub energy: f64,
    pub axial_momentum: f64,
    /// Largest `| |q| - R |`.
    pub radius: f64,
    /// Largest `|<q, v>| / |v|`.
    pub tangency: f64,
}

/// Absolute drifts of energy, axial angular momentum and the constraint, measured
/// from the first state.
pub fn measure_drift(ctx: &ProjectionContext, trajectory: &Trajectory) -> Result<Drift> {
    let first = &trajectory.states[0];
    let e0 = sphere_energy(ctx, first)?;
    let l0 = axial_momentum(ctx, first);
    let mut drift = Drift::default();
    for s in &trajectory.states {
        drift.energy = drift.energy.max((sphere_energy(ctx, s)? - e0).abs());
        drift.axial_momentum = drift.axial_momentum.max((axial_momentum(ctx, s) - l0).abs());
        drift.radius = drift.radius.max((s.q.norm() - ctx.radius()).abs());
        let speed = s.v.norm();
        if speed > 0.0 {
            drift.tangency = drift.tangency.max(s.q.dot(&s.v).abs() / speed);
        }
    }
    Ok(drift)
}

/// Flat energy `|dQ/dtau|^2 / 2 - 1/|Q|` and angular momentum `Q x dQ/dtau` of a sample.
pub fn planar_invariants(sample: &PlanarSample) -> (f64, f64) {
    let p = sample.position;
    let w = sample.velocity;
    (0.5 * w.norm_squared() - 1.0 / p.norm(), p.x * w.y - p.y * w.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2, TAU};

    fn unit() -> ProjectionContext {
        ProjectionContext::polar(1.0).unwrap()
    }

    fn circular_start() -> SphereState {
        SphereState::new(
            &unit(),
            Vector3::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2),
            Vector3::new(0.0, SQRT_2, 0.0),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn accel_examples() {
        let ctx = unit();
        let s = circular_start();
        let a = constrained_accel(&ctx, &s).unwrap();
        assert_relative_eq!(a.dot(&s.q), -2.0, epsilon = 1e-14);
        // Pure centripetal pull toward the axis for the circular latitude orbit.
        assert_relative_eq!(a, Vector3::new(-2.0 * SQRT_2, 0.0, 0.0), epsilon = 1e-14);

        let rest = SphereState { v: Vector3::zeros(), ..s };
        let a = constrained_accel(&ctx, &rest).unwrap();
        assert_relative_eq!(a, ctx.force_at(&s.q).unwrap(), epsilon = 1e-15);

        let pole = SphereState { q: Vector3::z(), v: Vector3::zeros(), t: 0.0 };
        assert!(matches!(constrained_accel(&ctx, &pole), Err(Error::PoleSingularity { .. })));
    }

    #[test]
    fn accel_preserves_constraint() {
        let ctx = ProjectionContext::polar(2.0).unwrap();
        let q = Vector3::new(0.6, -0.8, 1.6).normalize() * 2.0;
        let raw = Vector3::new(0.3, 1.1, -0.4);
        let v = raw - q * (q.dot(&raw) / 4.0);
        let s = SphereState::new(&ctx, q, v, 0.0).unwrap();
        let a = constrained_accel(&ctx, &s).unwrap();
        assert!((v.norm_squared() + q.dot(&a)).abs() < 1e-13);
    }

    #[test]
    fn state_validation() {
        let ctx = unit();
        assert!(SphereState::new(&ctx, Vector3::new(0.0, 0.0, 2.0), Vector3::zeros(), 0.0).is_err());
        assert!(SphereState::new(&ctx, Vector3::z(), Vector3::z(), 0.0).is_err());
    }

    #[test]
    fn circular_orbit_returns_after_pi() {
        let ctx = unit();
        let s = circular_start();
        let traj = integrate_orbit(&ctx, &s, PI, 0.05).unwrap();
        assert_eq!(traj.last().t, PI);
        assert!((traj.last().q - s.q).norm() < 1e-7);
        let drift = measure_drift(&ctx, &traj).unwrap();
        assert!(drift.energy < 1e-8);
        assert!(drift.radius < 1e-12);
    }

    #[test]
    fn circular_projection_is_unit_circle() {
        let ctx = unit();
        let traj = integrate_orbit(&ctx, &circular_start(), PI, 0.05).unwrap();
        let projected = reparametrize_and_project(&ctx, &traj).unwrap();
        for s in projected.samples() {
            assert!((s.position.norm() - 1.0).abs() < 1e-10);
            assert!((s.velocity.norm() - 1.0).abs() < 1e-10);
            // Constant h = 1/sqrt 2, so tau = 2 t.
            assert!((s.tau - 2.0 * s.t).abs() < 1e-10);
        }
        // One sphere period is one Kepler period 2 pi in tau.
        assert!((projected.samples().last().unwrap().tau - TAU).abs() < 1e-10);
        assert!(projected.kepler_residual().unwrap() < 1e-6);
    }

    #[test]
    fn rest_start_falls_along_meridian() {
        let ctx = unit();
        let q = Vector3::new(0.6, 0.0, 0.8);
        let s = SphereState::new(&ctx, q, Vector3::zeros(), 0.0).unwrap();
        let traj = integrate_orbit(&ctx, &s, 0.2, 0.01).unwrap();
        let end = traj.last();
        assert!(end.q.y.abs() < 1e-14 && end.v.y.abs() < 1e-14);
        assert!(end.q.z > q.z);
        let drift = measure_drift(&ctx, &traj).unwrap();
        assert!(drift.energy < 1e-8 * sphere_energy(&ctx, &s).unwrap().abs());
    }

    #[test]
    fn leaving_the_hemisphere_is_reported() {
        let ctx = unit();
        // Escape speed along the meridian: the particle crosses the equator.
        let q = Vector3::new(0.6, 0.0, 0.8);
        let v = Vector3::new(0.8, 0.0, -0.6) * 5.0;
        let s = SphereState::new(&ctx, q, v, 0.0).unwrap();
        assert!(matches!(integrate_orbit(&ctx, &s, 10.0, 0.01), Err(Error::HemisphereExit { .. })));
    }

    #[test]
    fn lifted_velocity_matches_finite_differences() {
        // q(u(tau)) differentiated numerically against the lifted velocity.
        let ctx = ProjectionContext::polar(1.7).unwrap();
        let o = EllipticElements::new(1.3, 0.45).unwrap();
        let u = 1.1;
        let du = 1e-6;
        let qp = ctx.lift(&o.position(u + du)).vector();
        let qm = ctx.lift(&o.position(u - du)).vector();
        let dq_du = (qp - qm) / (2.0 * du);
        let plane = o.position(u);
        let h = ctx.lift_height(&plane);
        // dt/du = h^2 dtau/du.
        let dt_du = h * h * o.a().powf(1.5) * (1.0 - o.e() * u.cos());
        let s = lift_state(&ctx, &o, u, 0.0);
        assert_relative_eq!(s.v, dq_du / dt_du, max_relative = 1e-8);
        assert!(s.q.dot(&s.v).abs() < 1e-14);
    }

    #[test]
    fn projected_velocity_inverts_lift() {
        let ctx = unit();
        let o = EllipticElements::new(0.8, 0.3).unwrap();
        let s = lift_state(&ctx, &o, 2.0, 0.0);
        let traj = integrate_orbit(&ctx, &s, 0.0, 0.1).unwrap();
        let p = reparametrize_and_project(&ctx, &traj).unwrap();
        assert_relative_eq!(p.samples()[0].velocity, o.velocity(2.0), epsilon = 1e-14);
        assert_relative_eq!(p.samples()[0].position, o.position(2.0).coords(), epsilon = 1e-14);
    }

    #[test]
    fn correspondence_examples() {
        let ctx = unit();
        let circle = EllipticElements::new(1.0, 0.0).unwrap();
        let r = correspondence_residual(&ctx, &circle, &AnomalyArc::new(0.0, PI).unwrap()).unwrap();
        assert!(r < 1e-6, "{r}");
        let ellipse = EllipticElements::new(1.0, 0.5).unwrap();
        let r = correspondence_residual(&ctx, &ellipse, &AnomalyArc::new(0.0, TAU).unwrap()).unwrap();
        assert!(r < 1e-6, "{r}");
        let r = correspondence_residual(&ctx, &ellipse, &AnomalyArc::new(0.4, 0.4).unwrap()).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn backward_arc_uses_time_reversal() {
        let ctx = ProjectionContext::polar(1.5).unwrap();
        let o = EllipticElements::new(0.9, 0.35).unwrap();
        let run = run_correspondence(
            &ctx,
            &o,
            &AnomalyArc::new(2.0, 0.5).unwrap(),
            &IntegratorSettings::new(0.05),
        )
        .unwrap();
        assert!(run.predicted_time < 0.0);
        assert!(run.residual < 1e-6, "{}", run.residual);
        assert!((run.tau_elapsed - run.expected_tau).abs() < 1e-8);
    }

    #[test]
    fn kepler_time_matches_flat_passing_time() {
        let ctx = unit();
        let o = EllipticElements::new(1.4, 0.6).unwrap();
        let run = run_correspondence(
            &ctx,
            &o,
            &AnomalyArc::new(0.3, 4.0).unwrap(),
            &IntegratorSettings::new(0.05),
        )
        .unwrap();
        assert!((run.tau_elapsed - run.expected_tau).abs() < 1e-8);
        let en = sphere_energy(&ctx, &run.projected.trajectory().states()[0]).unwrap();
        for s in run.projected.samples() {
            let (flat, c) = planar_invariants(s);
            assert!((flat - o.flat_energy()).abs() < 1e-7);
            assert!((flat - (en - c * c / 2.0)).abs() < 1e-7);
        }
    }
}
