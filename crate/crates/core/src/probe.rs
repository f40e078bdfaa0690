//! Level-set scans: does the passing time factor through a pair `(f, g)` of
//! functions of the endpoint distances?
//!
//! A scan draws random arcs at fixed energy and, for each one, continues it in
//! eccentricity to a partner arc with the same `(f, g)` values. Samples are then
//! binned by `(f, g)` and the largest passing-time spread inside a bin is
//! reported. The same machinery runs on flat orbits, where Lambert's theorem
//! gives a ground truth for the harness.
//!
//! A small spread is evidence for a candidate and a large one is evidence
//! against it. Neither is a proof.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flat::{passing_time_flat, AnomalyArc, ChordSumTriple, EllipticElements};
use crate::output::{json_number, sig17};
use crate::sphere::{elements_family_from_energy, geodesic_triangle_from_arc, passing_time_spherical, SphericalEnergy};

/// Default pitch of the `(f, g)` grid.
pub const DEFAULT_BIN_TOLERANCE: f64 = 1e-9;
/// Spreads at or below this are reported as noise level.
pub const NOISE_SPREAD: f64 = 1e-9;
/// Eccentricity range of sampled orbits.
pub const MAX_SAMPLE_ECCENTRICITY: f64 = 0.95;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const PARTNER_STREAM_OFFSET: u64 = 1 << 40;

/// A function of `(d1, d2, d12)`: two endpoint distances from the center and
/// the distance between the endpoints.
pub type DistanceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A candidate pair `(f, g)`.
#[derive(Clone)]
pub struct InvariantCandidate {
    name: String,
    f: DistanceFn,
    g: DistanceFn,
}

impl std::fmt::Debug for InvariantCandidate {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("InvariantCandidate").field("name", &self.name).finish_non_exhaustive()
    }
}

// Distance triples used to test endpoint symmetry.
const SYMMETRY_PROBES: [[f64; 3]; 4] = [[0.3, 0.7, 0.5], [0.11, 1.2, 1.05], [1.4, 0.2, 1.3], [0.9, 0.45, 0.6]];

impl InvariantCandidate {
    /// Registers a candidate. Both functions must be symmetric in `(d1, d2)`.
    pub fn new(name: impl Into<String>, f: DistanceFn, g: DistanceFn) -> Result<Self> {
        let candidate = Self::new_asymmetric(name, f, g);
        if candidate.is_symmetric() {
            Ok(candidate)
        } else {
            Err(Error::AsymmetricCandidate { name: candidate.name })
        }
    }

    /// Registers a candidate without the symmetry check.
    pub fn new_asymmetric(name: impl Into<String>, f: DistanceFn, g: DistanceFn) -> Self {
        Self { name: name.into(), f, g }
    }

    /// Builds a candidate from two expressions in the variables `t1`, `t2`, `t12`,
    /// e.g. `"math::tan(t1) + math::tan(t2)"`.
    pub fn from_expressions(name: impl Into<String>, f: &str, g: &str, allow_asymmetric: bool) -> Result<Self> {
        let f = compile_expression(f)?;
        let g = compile_expression(g)?;
        if allow_asymmetric {
            Ok(Self::new_asymmetric(name, f, g))
        } else {
            Self::new(name, f, g)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn evaluate(&self, d: &[f64; 3]) -> (f64, f64) {
        ((self.f)(d[0], d[1], d[2]), (self.g)(d[0], d[1], d[2]))
    }

    pub fn is_symmetric(&self) -> bool {
        SYMMETRY_PROBES.iter().all(|&[x1, x2, x12]| {
            [&self.f, &self.g].iter().all(|h| {
                let (forward, swapped) = (h(x1, x2, x12), h(x2, x1, x12));
                !(forward.is_finite() || swapped.is_finite())
                    || (forward - swapped).abs() <= SYMMETRY_TOLERANCE * forward.abs().max(1.0)
            })
        })
    }
}

fn compile_expression(source: &str) -> Result<DistanceFn> {
    let tree: Node<DefaultNumericTypes> =
        build_operator_tree(source).map_err(|e| Error::Expression(format!("`{source}`: {e}")))?;
    let eval = move |t1: f64, t2: f64, t12: f64| -> std::result::Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (name, value) in [("t1", t1), ("t2", t2), ("t12", t12)] {
            ctx.set_value(name.into(), Value::from_float(value)).map_err(|e| e.to_string())?;
        }
        tree.eval_number_with_context(&ctx).map_err(|e| e.to_string())
    };
    // Surface unknown variables and type errors at registration.
    eval(0.3, 0.4, 0.5).map_err(|e| Error::Expression(format!("`{source}`: {e}")))?;
    Ok(Arc::new(move |t1, t2, t12| eval(t1, t2, t12).unwrap_or(f64::NAN)))
}

fn candidate(name: &str, f: fn(f64, f64, f64) -> f64, g: fn(f64, f64, f64) -> f64) -> InvariantCandidate {
    InvariantCandidate::new_asymmetric(name, Arc::new(f), Arc::new(g))
}

/// Built-in spherical candidates, spherical analogs of `(r1 + r2, c)` under
/// `r = R tan theta`.
pub fn catalog() -> Vec<InvariantCandidate> {
    vec![
        candidate("sum-theta", |t1, t2, _| t1 + t2, |_, _, t12| t12),
        candidate("half-tan", |t1, t2, _| (0.5 * t1).tan() + (0.5 * t2).tan(), |_, _, t12| t12),
        candidate("tan", |t1, t2, _| t1.tan() + t2.tan(), |_, _, t12| t12.tan()),
        candidate("cos", |t1, t2, _| t1.cos() + t2.cos(), |_, _, t12| t12.cos()),
    ]
}

/// Looks up a catalog entry or one of the flat harness candidates by name.
pub fn named_candidate(name: &str) -> Option<InvariantCandidate> {
    catalog()
        .into_iter()
        .chain([flat_lambert_candidate(), flat_radius_chord_candidate()])
        .find(|c| c.name == name)
}

/// `(r1 + r2, c)`: Lambert's pair on flat data.
pub fn flat_lambert_candidate() -> InvariantCandidate {
    candidate("flat-lambert", |r1, r2, _| r1 + r2, |_, _, c| c)
}

/// `(r1, c)`: a deliberately wrong, asymmetric pair.
pub fn flat_radius_chord_candidate() -> InvariantCandidate {
    candidate("flat-r1-c", |r1, _, _| r1, |_, _, c| c)
}

/// Where the sampled orbits live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// Planar orbits of fixed semi major axis; distances are `(r1, r2, c)`.
    Flat { a: f64 },
    /// Orbits on the sphere at fixed energy; distances are `(theta1, theta2, theta12)`.
    Sphere { energy: SphericalEnergy },
}

impl Geometry {
    pub fn elements(&self, e: f64) -> Result<EllipticElements> {
        match self {
            Geometry::Flat { a } => EllipticElements::new(*a, e),
            Geometry::Sphere { energy } => elements_family_from_energy(energy, e),
        }
    }

    pub fn distances(&self, elems: &EllipticElements, arc: &AnomalyArc) -> Result<[f64; 3]> {
        match self {
            Geometry::Flat { .. } => {
                let t = ChordSumTriple::from_arc(elems, arc);
                Ok([t.r1, t.r2, t.c])
            }
            Geometry::Sphere { energy } => Ok(geodesic_triangle_from_arc(elems, arc, energy.radius())?.as_array()),
        }
    }

    pub fn passing_time(&self, elems: &EllipticElements, arc: &AnomalyArc) -> Result<f64> {
        match self {
            Geometry::Flat { .. } => Ok(passing_time_flat(elems, arc)),
            Geometry::Sphere { energy } => passing_time_spherical(elems, arc, energy.radius()),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Geometry::Flat { .. } => "flat",
            Geometry::Sphere { .. } => "sphere",
        }
    }

    fn sample(&self, e: f64, u1: f64, u2: f64) -> Result<ArcSample> {
        let elems = self.elements(e)?;
        let arc = AnomalyArc::new(u1, u2)?;
        Ok(ArcSample {
            a: elems.a(),
            e,
            u1,
            u2,
            distances: self.distances(&elems, &arc)?,
            time: self.passing_time(&elems, &arc)?,
        })
    }
}

/// One arc with its distances and passing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcSample {
    pub a: f64,
    pub e: f64,
    pub u1: f64,
    pub u2: f64,
    pub distances: [f64; 3],
    pub time: f64,
}

impl ArcSample {
    pub fn arc(&self) -> AnomalyArc {
        AnomalyArc { u1: self.u1, u2: self.u2 }
    }

    /// Revolution count and orientation; bins never mix these.
    pub fn branch(&self) -> (i64, i8) {
        let arc = self.arc();
        (arc.revolutions(), arc.orientation())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic samples with `e` uniform in `eccentricities` and `(u1, u2)`
/// uniform in `[0, 2 pi)^2`.
pub fn sample_arcs(
    geometry: &Geometry,
    n: usize,
    seed: u64,
    eccentricities: (f64, f64),
) -> Result<Vec<ArcSample>> {
    let (lo, hi) = eccentricities;
    if !(0.0 <= lo && lo <= hi && hi < 1.0) {
        return Err(Error::InvalidInput(format!("eccentricity range [{lo}, {hi}] must lie in [0, 1)")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let e = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let u1 = rng.gen_range(0.0..TAU);
            let u2 = rng.gen_range(0.0..TAU);
            geometry.sample(e, u1, u2)
        })
        .collect()
}

/// Samples on the unit sphere at fixed energy, `e` in `[0, 0.95]`.
pub fn sample_arcs_at_energy(energy: &SphericalEnergy, n: usize, seed: u64) -> Result<Vec<ArcSample>> {
    if energy.radius() != 1.0 {
        return Err(Error::UnsupportedRadius { radius: energy.radius() });
    }
    sample_arcs(&Geometry::Sphere { energy: *energy }, n, seed, (0.0, MAX_SAMPLE_ECCENTRICITY))
}

type Jacobian = [[f64; 2]; 2];

fn det(j: &Jacobian) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Candidate residual at `(u1, u2)` and its central-difference Jacobian.
fn linearize(
    geometry: &Geometry,
    candidate: &InvariantCandidate,
    elems: &EllipticElements,
    u: (f64, f64),
    target: (f64, f64),
) -> Option<((f64, f64), Jacobian)> {
    let residual = |u1: f64, u2: f64| -> Option<(f64, f64)> {
        let d = geometry.distances(elems, &AnomalyArc { u1, u2 }).ok()?;
        let (f, g) = candidate.evaluate(&d);
        let r = (f - target.0, g - target.1);
        (r.0.is_finite() && r.1.is_finite()).then_some(r)
    };
    let h = 1e-7;
    let r = residual(u.0, u.1)?;
    let (p1, m1) = (residual(u.0 + h, u.1)?, residual(u.0 - h, u.1)?);
    let (p2, m2) = (residual(u.0, u.1 + h)?, residual(u.0, u.1 - h)?);
    let j = [
        [(p1.0 - m1.0) / (2.0 * h), (p2.0 - m2.0) / (2.0 * h)],
        [(p1.1 - m1.1) / (2.0 * h), (p2.1 - m2.1) / (2.0 * h)],
    ];
    Some((r, j))
}

/// Newton solve of `(f, g)(u) = target`. Returns the root and the sign of the
/// Jacobian determinant there.
fn newton_match(
    geometry: &Geometry,
    candidate: &InvariantCandidate,
    elems: &EllipticElements,
    start: (f64, f64),
    target: (f64, f64),
    tolerance: f64,
) -> Option<((f64, f64), f64)> {
    let mut u = start;
    for _ in 0..40 {
        let (r, j) = linearize(geometry, candidate, elems, u, target)?;
        let d = det(&j);
        let size = j.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
        if !(d.abs() > 1e-8 * size * size) {
            return None;
        }
        if r.0.abs().max(r.1.abs()) <= tolerance {
            return Some((u, d.signum()));
        }
        let d1 = (j[1][1] * r.0 - j[0][1] * r.1) / d;
        let d2 = (j[0][0] * r.1 - j[1][0] * r.0) / d;
        if d1.abs().max(d2.abs()) > 0.1 {
            return None;
        }
        u = (u.0 - d1, u.1 - d2);
    }
    None
}

/// Continues `base` in eccentricity to `e_target`, keeping `(f, g)` fixed and
/// the orbit on the geometry's family. Returns `None` if the continuation breaks down.
///
/// Near a fold of `u -> (f, g)` two solution sheets meet and Newton may hop
/// between them. Such hops flip the sign of the Jacobian determinant, so a
/// sign change along the path rejects the partner.
pub fn find_partner(
    geometry: &Geometry,
    candidate: &InvariantCandidate,
    base: &ArcSample,
    e_target: f64,
    steps: usize,
) -> Option<ArcSample> {
    let target = candidate.evaluate(&base.distances);
    let scale = 1.0 + target.0.abs().max(target.1.abs());
    let mut u = (base.u1, base.u2);
    let (_, j0) = linearize(geometry, candidate, &geometry.elements(base.e).ok()?, u, target)?;
    let sign = det(&j0).signum();
    let steps = steps.max(1);
    for k in 1..=steps {
        let e = base.e + (e_target - base.e) * k as f64 / steps as f64;
        let elems = geometry.elements(e).ok()?;
        let tolerance = if k == steps { 1e-14 } else { 1e-9 } * scale;
        let (next, s) = newton_match(geometry, candidate, &elems, u, target, tolerance)?;
        if s != sign {
            return None;
        }
        u = next;
    }
    let partner = geometry.sample(e_target, u.0, u.1).ok()?;
    (partner.branch() == base.branch()).then_some(partner)
}

/// Scan controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub bin_tolerance: f64,
    /// Continuation steps from the base eccentricity to the partner's.
    pub partner_steps: usize,
    /// Partner eccentricities tried per base sample.
    pub partner_attempts: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { bin_tolerance: DEFAULT_BIN_TOLERANCE, partner_steps: 16, partner_attempts: 3 }
    }
}

/// Summary of one scan, serialized as the versioned JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub schema: &'static str,
    pub geometry: &'static str,
    #[serde(serialize_with = "sig17")]
    pub energy: f64,
    #[serde(serialize_with = "sig17")]
    pub radius: f64,
    pub candidate: String,
    pub samples: usize,
    pub bins: usize,
    pub populated_bins: usize,
    #[serde(serialize_with = "sig17")]
    pub max_spread: f64,
    #[serde(serialize_with = "sig17")]
    pub bin_tolerance: f64,
    pub partners_attempted: usize,
    pub partners_found: usize,
    pub evidence: &'static str,
    pub seed: u64,
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report fields are serializable")
    }
}

/// A sample together with its candidate values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRecord {
    pub sample: ArcSample,
    pub f: f64,
    pub g: f64,
}

/// Evidence label for a spread.
pub fn evidence_label(max_spread: f64) -> &'static str {
    if max_spread <= NOISE_SPREAD {
        "noise-level spread: consistent with the candidate (evidence, not proof)"
    } else {
        "spread above noise level: evidence against the candidate"
    }
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups records whose `(f, g)` agree to `bin_tolerance` and which share a
/// branch, and returns the groups as index lists in ascending order.
pub fn level_set_bins(records: &[ScanRecord], bin_tolerance: f64) -> Vec<Vec<usize>> {
    type Cell = (i64, i64, i64, i8);
    let cell_of = |r: &ScanRecord| -> Option<Cell> {
        if !(r.f.is_finite() && r.g.is_finite()) {
            return None;
        }
        let (revs, orient) = r.sample.branch();
        Some(((r.f / bin_tolerance).round() as i64, (r.g / bin_tolerance).round() as i64, revs, orient))
    };
    let mut cells: HashMap<Cell, usize> = HashMap::new();
    let mut sets = DisjointSets((0..records.len()).collect());
    for (i, r) in records.iter().enumerate() {
        if let Some(cell) = cell_of(r) {
            match cells.get(&cell) {
                Some(&j) => sets.union(i, j),
                None => {
                    cells.insert(cell, i);
                }
            }
        }
    }
    for (i, r) in records.iter().enumerate() {
        let Some((x, y, revs, orient)) = cell_of(r) else { continue };
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&j) = cells.get(&(x + dx, y + dy, revs, orient)) {
                    sets.union(i, j);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if cell_of(r).is_none() {
            continue;
        }
        let root = sets.find(i);
        let k = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[k].push(i);
    }
    groups
}

/// Bins `samples` by the candidate's values and reports the largest passing-time
/// spread inside a bin. Fails with [`Error::EmptyBins`] if every bin is a singleton.
pub fn scan_level_sets(
    geometry: &Geometry,
    samples: &[ArcSample],
    candidate: &InvariantCandidate,
    bin_tolerance: f64,
) -> Result<ScanReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("scan needs at least one sample".into()));
    }
    if !(bin_tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("bin tolerance must be positive, got {bin_tolerance}")));
    }
    let records = evaluate_records(samples, candidate);
    let bins = level_set_bins(&records, bin_tolerance);
    let mut populated = 0;
    let mut max_spread: f64 = 0.0;
    for bin in bins.iter().filter(|b| b.len() > 1) {
        populated += 1;
        let times = bin.iter().map(|&i| records[i].sample.time);
        let (lo, hi) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
        max_spread = max_spread.max(hi - lo);
    }
    if populated == 0 {
        return Err(Error::EmptyBins);
    }
    let (energy, radius) = match geometry {
        Geometry::Flat { a } => (-0.5 / a, f64::INFINITY),
        Geometry::Sphere { energy } => (energy.value(), energy.radius()),
    };
    Ok(ScanReport {
        schema: "v1",
        geometry: geometry.label(),
        energy,
        radius,
        candidate: candidate.name.clone(),
        samples: samples.len(),
        bins: bins.len(),
        populated_bins: populated,
        max_spread,
        bin_tolerance,
        partners_attempted: 0,
        partners_found: 0,
        evidence: evidence_label(max_spread),
        seed: 0,
    })
}

fn evaluate_records(samples: &[ArcSample], candidate: &InvariantCandidate) -> Vec<ScanRecord> {
    samples
        .iter()
        .map(|s| {
            let (f, g) = candidate.evaluate(&s.distances);
            ScanRecord { sample: *s, f, g }
        })
        .collect()
}

/// Result of [`run_scan`]: the report and every record that entered the binning.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub report: ScanReport,
    pub records: Vec<ScanRecord>,
}

/// Draws `base` samples, adds one partner per sample where continuation
/// succeeds, and scans the union.
pub fn run_scan(
    geometry: &Geometry,
    candidate: &InvariantCandidate,
    base: &[ArcSample],
    seed: u64,
    options: &ScanOptions,
) -> Result<ScanOutcome> {
    let partners: Vec<Option<ArcSample>> = base
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let mut rng = stream_rng(seed, PARTNER_STREAM_OFFSET + i as u64);
            (0..options.partner_attempts).find_map(|_| {
                let e_target = rng.gen_range(0.0..=MAX_SAMPLE_ECCENTRICITY);
                if (e_target - sample.e).abs() < 0.05 {
                    return None;
                }
                find_partner(geometry, candidate, sample, e_target, options.partner_steps)
            })
        })
        .collect();
    let found = partners.iter().flatten().count();
    let all: Vec<ArcSample> = base.iter().copied().chain(partners.into_iter().flatten()).collect();
    let mut report = scan_level_sets(geometry, &all, candidate, options.bin_tolerance)?;
    report.partners_attempted = base.len();
    report.partners_found = found;
    report.seed = seed;
    Ok(ScanOutcome { report, records: evaluate_records(&all, candidate) })
}

/// Column names of [`write_records_csv`].
pub const CSV_COLUMNS: [&str; 10] = ["a", "e", "u1", "u2", "theta1", "theta2", "theta12", "time", "f", "g"];

/// Writes records as CSV with 17 significant digits. On flat data the three
/// distance columns hold `r1, r2, c`.
pub fn write_records_csv<W: Write>(writer: W, records: &[ScanRecord]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidInput(format!("csv output failed: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in records {
        let s = &r.sample;
        let row = [s.a, s.e, s.u1, s.u2, s.distances[0], s.distances[1], s.distances[2], s.time, r.f, r.g];
        w.write_record(row.iter().map(|&x| json_number(x))).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("csv output failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sphere(en: f64) -> Geometry {
        Geometry::Sphere { energy: SphericalEnergy::unit(en).unwrap() }
    }

    #[test]
    fn sampling_is_reproducible() {
        let en = SphericalEnergy::unit(0.3).unwrap();
        let a = sample_arcs_at_energy(&en, 1, 7).unwrap();
        let b = sample_arcs_at_energy(&en, 1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_arcs_at_energy(&en, 1, 8).unwrap());
        let longer = sample_arcs_at_energy(&en, 5, 7).unwrap();
        assert_eq!(longer[0], a[0]);
    }

    #[test]
    fn samples_sit_on_the_energy_level() {
        let en = SphericalEnergy::unit(-0.7).unwrap();
        for s in sample_arcs_at_energy(&en, 200, 1).unwrap() {
            let o = EllipticElements::new(s.a, s.e).unwrap();
            let value = crate::sphere::spherical_energy(&o, 1.0).unwrap().value();
            assert!((value + 0.7).abs() < 1e-12);
            assert!(s.u1 >= 0.0 && s.u1 < TAU && s.u2 >= 0.0 && s.u2 < TAU);
            assert!((0.0..=MAX_SAMPLE_ECCENTRICITY).contains(&s.e));
        }
        let other = SphericalEnergy::new(0.1, 2.0).unwrap();
        assert!(matches!(sample_arcs_at_energy(&other, 3, 0), Err(Error::UnsupportedRadius { .. })));
    }

    #[test]
    fn circular_zero_energy_samples() {
        // Constant integrand 1/2 on the circle a = 1.
        for s in sample_arcs(&sphere(0.0), 50, 3, (0.0, 0.0)).unwrap() {
            assert!((s.a - 1.0).abs() < 1e-15);
            assert!((s.time - 0.5 * (s.u2 - s.u1)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_is_enforced() {
        let f: DistanceFn = Arc::new(|a, _, _| a);
        let g: DistanceFn = Arc::new(|_, _, c| c);
        assert!(matches!(
            InvariantCandidate::new("r1", f.clone(), g.clone()),
            Err(Error::AsymmetricCandidate { .. })
        ));
        assert!(!InvariantCandidate::new_asymmetric("r1", f, g).is_symmetric());
        for c in catalog() {
            assert!(c.is_symmetric(), "{}", c.name());
        }
        assert!(flat_lambert_candidate().is_symmetric());
        assert!(!flat_radius_chord_candidate().is_symmetric());
    }

    #[test]
    fn expression_candidates() {
        let c = InvariantCandidate::from_expressions("x", "math::tan(t1) + math::tan(t2)", "t12", false).unwrap();
        let (f, g) = c.evaluate(&[0.2, 0.3, 0.4]);
        assert!((f - (0.2f64.tan() + 0.3f64.tan())).abs() < 1e-15);
        assert_eq!(g, 0.4);
        let ints = InvariantCandidate::from_expressions("y", "t1 + t2 + 1", "2 * t12", false).unwrap();
        assert_eq!(ints.evaluate(&[0.25, 0.5, 1.0]), (1.75, 2.0));
        assert!(matches!(
            InvariantCandidate::from_expressions("z", "t1", "t12", false),
            Err(Error::AsymmetricCandidate { .. })
        ));
        assert!(InvariantCandidate::from_expressions("z", "t1", "t12", true).is_ok());
        assert!(matches!(
            InvariantCandidate::from_expressions("w", "t1 + q", "t12", false),
            Err(Error::Expression(_))
        ));
        assert!(InvariantCandidate::from_expressions("w", "t1 +", "t12", false).is_err());
    }

    #[test]
    fn binning_respects_branches_and_tolerance() {
        let s = |u1: f64, u2: f64, time: f64| ArcSample { a: 1.0, e: 0.1, u1, u2, distances: [0.0; 3], time };
        let r = |sample, f, g| ScanRecord { sample, f, g };
        let records = [
            r(s(0.0, 1.0, 1.0), 1.0, 2.0),
            r(s(0.0, 1.0, 1.5), 1.0 + 4e-10, 2.0),
            r(s(1.0, 0.0, 1.7), 1.0, 2.0),
            r(s(0.0, 1.0, 9.0), 1.0 + 1e-6, 2.0),
            r(s(0.0, 1.0, 9.0), f64::NAN, 2.0),
        ];
        let bins = level_set_bins(&records, 1e-9);
        assert_eq!(bins, vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn flat_partner_preserves_lambert_invariants() {
        let geometry = Geometry::Flat { a: 1.3 };
        let base = geometry.sample(0.2, 0.4, 2.9).unwrap();
        let c = flat_lambert_candidate();
        let partner = find_partner(&geometry, &c, &base, 0.7, 16).unwrap();
        let (f0, g0) = c.evaluate(&base.distances);
        let (f1, g1) = c.evaluate(&partner.distances);
        assert!((f0 - f1).abs() < 1e-11 && (g0 - g1).abs() < 1e-11);
        assert!((partner.e - 0.7).abs() < 1e-15);
        assert!((partner.time - base.time).abs() < 1e-11);
    }

    #[test]
    fn flat_harness_accepts_lambert_pair() {
        let geometry = Geometry::Flat { a: 1.0 };
        let base = sample_arcs(&geometry, 300, 11, (0.0, MAX_SAMPLE_ECCENTRICITY)).unwrap();
        let out = run_scan(&geometry, &flat_lambert_candidate(), &base, 11, &ScanOptions::default()).unwrap();
        assert!(out.report.partners_found > 100);
        assert!(out.report.max_spread < 1e-9, "{}", out.report.max_spread);
        let bad = run_scan(&geometry, &flat_radius_chord_candidate(), &base, 11, &ScanOptions::default()).unwrap();
        assert!(bad.report.max_spread > 1e-3, "{}", bad.report.max_spread);
    }

    #[test]
    fn singletons_are_inconclusive() {
        let geometry = sphere(0.0);
        let samples = sample_arcs(&geometry, 20, 0, (0.0, 0.9)).unwrap();
        assert_eq!(
            scan_level_sets(&geometry, &samples, &catalog()[0], 1e-9),
            Err(Error::EmptyBins)
        );
        assert!(scan_level_sets(&geometry, &[], &catalog()[0], 1e-9).is_err());
        assert!(scan_level_sets(&geometry, &samples, &catalog()[0], 0.0).is_err());
    }

    #[test]
    fn spherical_report_is_deterministic() {
        let geometry = sphere(0.0);
        let en = SphericalEnergy::unit(0.0).unwrap();
        let base = sample_arcs_at_energy(&en, 60, 5).unwrap();
        let run = || run_scan(&geometry, &catalog()[0], &base, 5, &ScanOptions::default()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.report.to_json(), b.report.to_json());
        let json: serde_json::Value = serde_json::from_str(&a.report.to_json()).unwrap();
        assert_eq!(json["schema"], "v1");
        assert_eq!(json["energy"].as_f64(), Some(0.0));
        assert!(a.report.samples >= a.report.bins);
        let mut csv = Vec::new();
        write_records_csv(&mut csv, &a.records).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(text.lines().count(), a.records.len() + 1);
    }

    #[test]
    fn geometry_dispatch() {
        let flat = Geometry::Flat { a: 2.0 };
        let s = flat.sample(0.0, 0.0, PI).unwrap();
        assert!((s.distances[2] - 4.0).abs() < 1e-14);
        assert!((s.time - PI * 2f64.powf(1.5)).abs() < 1e-13);
    }
}
