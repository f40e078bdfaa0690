//! Quadrature rules used by the passing-time computations.
//!
//! Partial arcs go through adaptive Simpson with Richardson correction. Full
//! periods of smooth periodic integrands use the uniform trapezoidal rule, which
//! converges geometrically there.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Longest sub-interval handed to the adaptive recursion as a single panel.
const MAX_PANEL: f64 = std::f64::consts::FRAC_PI_4;

/// Adaptive Simpson integral of `f` over `[lower, upper]` to absolute tolerance `tol`.
///
/// The orientation is respected: `upper < lower` gives the negated integral.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    if lower == upper {
        return Ok(0.0);
    }
    if upper < lower {
        return adaptive_simpson(f, upper, lower, tol).map(|v| -v);
    }
    let fail = || Error::QuadratureFailure { lower, upper, tolerance: tol };
    if !(tol > 0.0) || !lower.is_finite() || !upper.is_finite() {
        return Err(fail());
    }

    let length = upper - lower;
    let panels = (length / MAX_PANEL).ceil().max(1.0) as usize;
    let width = length / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = lower + k as f64 * width;
        let b = if k + 1 == panels { upper } else { a + width };
        let fa = f(a);
        let fb = f(b);
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = simpson(a, b, fa, fm, fb);
        let part = recurse(&f, a, b, fa, fm, fb, whole, tol * (b - a) / length, MAX_DEPTH, false)
            .ok_or_else(fail)?;
        total += part;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(fail())
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    parent_ok: bool,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    // Two consecutive levels must pass, which guards against error estimates
    // that vanish by cancellation when the fourth derivative changes sign.
    let ok = delta.abs() <= 15.0 * tol;
    if ok && parent_ok {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 || m <= a || b <= m {
        return None;
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)?;
    Some(l + r)
}

/// Trapezoidal rule over one full period `[start, start + period)` with node
/// doubling until successive estimates differ by less than `tol`.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: F, start: f64, period: f64, tol: f64) -> Result<f64> {
    let fail = || Error::QuadratureFailure { lower: start, upper: start + period, tolerance: tol };
    let mut n = 16usize;
    let mut sum: f64 = (0..n).map(|k| f(start + period * k as f64 / n as f64)).sum();
    let mut estimate = sum * period / n as f64;
    while n < (1 << 22) {
        // Odd nodes of the refined grid.
        let added: f64 = (0..n)
            .map(|k| f(start + period * (2 * k + 1) as f64 / (2 * n) as f64))
            .sum();
        sum += added;
        n *= 2;
        let refined = sum * period / n as f64;
        if !refined.is_finite() {
            return Err(fail());
        }
        if (refined - estimate).abs() < tol {
            return Ok(refined);
        }
        estimate = refined;
    }
    Err(fail())
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss-Legendre rule on `[lower, upper]` (exact for degree 9).
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, lower: f64, upper: f64) -> f64 {
    let half = 0.5 * (upper - lower);
    let mid = 0.5 * (upper + lower);
    GL5_NODES
        .iter()
        .zip(GL5_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}
