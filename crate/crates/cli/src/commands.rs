//! Subcommand implementations. Each writes its complete output into a buffer.

use std::io::Write;

use serde::ser::{Serialize, SerializeMap, Serializer};

use spherical_kepler::dynamics::{measure_drift, run_correspondence, IntegratorSettings};
use spherical_kepler::flat::{lambert_branches, passing_time_flat};
use spherical_kepler::output::{json_number, plain_number, sig17};
use spherical_kepler::probe::{
    catalog, flat_lambert_candidate, flat_radius_chord_candidate, named_candidate, run_scan, sample_arcs,
    write_records_csv, Geometry, InvariantCandidate, ScanOptions, ScanReport, MAX_SAMPLE_ECCENTRICITY,
};
use spherical_kepler::projection::ProjectionContext;
use spherical_kepler::sphere::{
    elements_family_from_energy, geodesic_major_angle, passing_time_spherical_with_tolerance, spherical_energy,
    spherical_period_closed, spherical_period_quadrature,
};
use spherical_kepler::verify::{run_all, Bound};
use spherical_kepler::{AnomalyArc, EllipticElements, Error, SphericalEnergy};

use crate::{ArcArgs, Cli, Command, Failure, Format};

/// Largest closed-form versus quadrature period gap accepted by `period`.
const PERIOD_AGREEMENT: f64 = 1e-10;

type Out<'a> = &'a mut Vec<u8>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_)
            | Error::UnsupportedRadius { .. }
            | Error::AsymmetricCandidate { .. }
            | Error::Expression(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io_failure(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(format!("output failed: {e}"))
}

/// A JSON field value.
enum Field {
    Num(f64),
    Int(i64),
    Str(String),
    Bool(bool),
}

impl Serialize for Field {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Field::Num(x) => sig17(x, s),
            Field::Int(i) => s.serialize_i64(*i),
            Field::Str(t) => s.serialize_str(t),
            Field::Bool(b) => s.serialize_bool(*b),
        }
    }
}

impl Field {
    fn text(&self) -> String {
        match self {
            Field::Num(x) => json_number(*x),
            Field::Int(i) => i.to_string(),
            Field::Str(t) => t.clone(),
            Field::Bool(b) => b.to_string(),
        }
    }

    fn plain(&self) -> String {
        match self {
            Field::Num(x) => plain_number(*x),
            other => other.text(),
        }
    }
}

/// An object whose keys keep insertion order.
struct Record(Vec<(&'static str, Field)>);

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Top-level JSON document `{"schema": "v1", <key>: <body>}`.
fn json_document<T: Serialize>(out: Out, key: &str, body: &T) -> Result<(), Failure> {
    struct Doc<'a, T>(&'a str, &'a T);
    impl<T: Serialize> Serialize for Doc<'_, T> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            let mut map = s.serialize_map(Some(2))?;
            map.serialize_entry("schema", "v1")?;
            map.serialize_entry(self.0, self.1)?;
            map.end()
        }
    }
    serde_json::to_writer(&mut *out, &Doc(key, body)).map_err(io_failure)?;
    writeln!(out).map_err(io_failure)
}

fn json_record(out: Out, record: Record) -> Result<(), Failure> {
    let mut fields = vec![("schema", Field::Str("v1".into()))];
    fields.extend(record.0);
    serde_json::to_writer(&mut *out, &Record(fields)).map_err(io_failure)?;
    writeln!(out).map_err(io_failure)
}

fn csv_rows(out: Out, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(header).map_err(io_failure)?;
    for row in rows {
        w.write_record(row).map_err(io_failure)?;
    }
    w.flush().map_err(io_failure)
}

/// Emits one record. Plain output prints the first field's value alone on the
/// first line and the remaining fields as `name value` lines.
fn emit_record(out: Out, format: Format, record: Record) -> Result<(), Failure> {
    match format {
        Format::Json => json_record(out, record),
        Format::Csv => {
            let header: Vec<&str> = record.0.iter().map(|(k, _)| *k).collect();
            csv_rows(out, &header, &[record.0.iter().map(|(_, v)| v.text()).collect()])
        }
        Format::Plain => {
            for (i, (k, v)) in record.0.iter().enumerate() {
                if i == 0 {
                    writeln!(out, "{}", v.plain())
                } else {
                    writeln!(out, "{k} {}", v.plain())
                }
                .map_err(io_failure)?;
            }
            Ok(())
        }
    }
}

fn arc_of(args: &ArcArgs) -> Result<(EllipticElements, AnomalyArc), Failure> {
    Ok((EllipticElements::new(args.a, args.e)?, AnomalyArc::new(args.u1, args.u2)?))
}

pub fn run(cli: &Cli, out: Out) -> Result<(), Failure> {
    let format = cli.format;
    match &cli.command {
        Command::Energy(args) => {
            let elems = EllipticElements::new(args.a, args.e)?;
            let energy = spherical_energy(&elems, args.radius)?;
            emit_record(out, format, Record(vec![("energy", Field::Num(energy.value()))]))
        }
        Command::ThetaA(args) => {
            let energy = SphericalEnergy::new(args.energy, args.radius)?;
            emit_record(out, format, Record(vec![("theta_a", Field::Num(geodesic_major_angle(&energy)))]))
        }
        Command::TofFlat(args) => {
            let (elems, arc) = arc_of(args)?;
            emit_record(out, format, Record(vec![("time", Field::Num(passing_time_flat(&elems, &arc)))]))
        }
        Command::TofSphere(args) => {
            let (elems, arc) = arc_of(&args.arc)?;
            let t = passing_time_spherical_with_tolerance(&elems, &arc, args.radius, args.tolerance)?;
            emit_record(out, format, Record(vec![("time", Field::Num(t))]))
        }
        Command::Period(args) => period(out, format, args),
        Command::Lambert(args) => lambert(out, format, args),
        Command::Verify(args) => verify(out, format, args.seed),
        Command::OrbitSim(args) => orbit_sim(out, format, args),
        Command::Scan(args) => scan(out, format, args),
    }
}

fn period(out: Out, format: Format, args: &crate::PeriodArgs) -> Result<(), Failure> {
    let (energy, elems) = match (args.energy, args.a) {
        (Some(value), None) => {
            let energy = SphericalEnergy::unit(value)?;
            let elems = elements_family_from_energy(&energy, args.e.unwrap_or(0.0))?;
            (energy, elems)
        }
        (None, Some(a)) => {
            let elems = EllipticElements::new(a, args.e.expect("clap requires --e with --a"))?;
            (spherical_energy(&elems, 1.0)?, elems)
        }
        _ => return Err(Failure::Usage("give exactly one of --energy and --a".into())),
    };
    let closed = spherical_period_closed(&energy)?;
    let quadrature = spherical_period_quadrature(&elems)?;
    let difference = (closed - quadrature).abs();
    emit_record(
        out,
        format,
        Record(vec![
            ("period", Field::Num(closed)),
            ("quadrature", Field::Num(quadrature)),
            ("difference", Field::Num(difference)),
            ("energy", Field::Num(energy.value())),
            ("a", Field::Num(elems.a())),
            ("e", Field::Num(elems.e())),
        ]),
    )?;
    if difference < PERIOD_AGREEMENT {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "closed form and quadrature differ by {difference:e} (limit {PERIOD_AGREEMENT:e})"
        )))
    }
}

fn lambert(out: Out, format: Format, args: &crate::LambertArgs) -> Result<(), Failure> {
    let branches = lambert_branches(args.sum, args.c, args.a)?;
    let records: Vec<Record> = branches
        .iter()
        .map(|b| {
            Record(vec![
                ("phi", Field::Num(b.angles.phi)),
                ("psi", Field::Num(b.angles.psi)),
                ("time", Field::Num(b.time)),
                ("raw_time", Field::Num(b.raw_time)),
                ("orientation", Field::Int(b.orientation.into())),
                ("revolutions", Field::Int(b.revolutions)),
                ("coincident_endpoints", Field::Bool(b.flags.coincident_endpoints)),
                ("circular_preimage", Field::Bool(b.flags.circular_preimage)),
                ("rectilinear", Field::Bool(b.flags.rectilinear)),
            ])
        })
        .collect();
    table(out, format, "branches", &records)
}

fn table(out: Out, format: Format, key: &str, records: &[Record]) -> Result<(), Failure> {
    match format {
        Format::Json => json_document(out, key, &records),
        Format::Csv | Format::Plain if records.is_empty() => Ok(()),
        Format::Csv => {
            let header: Vec<&str> = records[0].0.iter().map(|(k, _)| *k).collect();
            let rows: Vec<Vec<String>> = records.iter().map(|r| r.0.iter().map(|(_, v)| v.text()).collect()).collect();
            csv_rows(out, &header, &rows)
        }
        Format::Plain => {
            let header: Vec<&str> = records[0].0.iter().map(|(k, _)| *k).collect();
            writeln!(out, "{}", header.join(" ")).map_err(io_failure)?;
            for r in records {
                let cells: Vec<String> = r.0.iter().map(|(_, v)| v.plain()).collect();
                writeln!(out, "{}", cells.join(" ")).map_err(io_failure)?;
            }
            Ok(())
        }
    }
}

fn verify(out: Out, format: Format, seed: u64) -> Result<(), Failure> {
    let rows = run_all(seed);
    let failed = rows.iter().filter(|r| !r.passed).count();
    match format {
        Format::Json => json_document(out, "checks", &rows)?,
        Format::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.suite.to_string(),
                        r.check.to_string(),
                        json_number(r.measured),
                        format!("{:?}", r.bound).to_lowercase(),
                        json_number(r.threshold),
                        r.passed.to_string(),
                    ]
                })
                .collect();
            csv_rows(out, &["suite", "check", "measured", "bound", "threshold", "passed"], &body)?;
        }
        Format::Plain => {
            for r in &rows {
                let relation = match r.bound {
                    Bound::Below => "<",
                    Bound::Above => ">",
                };
                let status = if r.passed { "PASS" } else { "FAIL" };
                let detail = match &r.error {
                    Some(e) => format!("error: {e}"),
                    None => format!("{} {relation} {}", plain_number(r.measured), plain_number(r.threshold)),
                };
                writeln!(out, "{status} {:<10} {:<50} {detail}", r.suite, r.check).map_err(io_failure)?;
            }
            writeln!(out, "{} of {} checks passed", rows.len() - failed, rows.len()).map_err(io_failure)?;
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{failed} check(s) failed")))
    }
}

fn orbit_sim(out: Out, format: Format, args: &crate::OrbitSimArgs) -> Result<(), Failure> {
    let (elems, arc) = arc_of(&args.arc)?;
    let ctx = ProjectionContext::polar(args.radius)?;
    let settings = IntegratorSettings { tolerance: args.tolerance, dt_max: args.dt_max, renormalize: true };
    let run = run_correspondence(&ctx, &elems, &arc, &settings)?;
    let trajectory = run.projected.trajectory();
    let drift = measure_drift(&ctx, trajectory)?;
    let samples = run.projected.samples();

    let header = ["t", "tau", "qx", "qy", "qz", "Qx", "Qy"];
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            [s.t, s.tau, s.q.x, s.q.y, s.q.z, s.position.x, s.position.y]
                .iter()
                .map(|&x| json_number(x))
                .collect()
        })
        .collect();
    if let Some(path) = &args.trajectory {
        let mut buffer = Vec::new();
        csv_rows(&mut buffer, &header, &rows)?;
        std::fs::write(path, buffer).map_err(|e| Failure::Usage(format!("--trajectory {}: {e}", path.display())))?;
    }
    if format == Format::Csv {
        return csv_rows(out, &header, &rows);
    }
    emit_record(
        out,
        format,
        Record(vec![
            ("residual", Field::Num(run.residual)),
            ("predicted_time", Field::Num(run.predicted_time)),
            ("tau_elapsed", Field::Num(run.tau_elapsed)),
            ("expected_tau", Field::Num(run.expected_tau)),
            ("kepler_residual", Field::Num(run.projected.kepler_residual()?)),
            ("energy_drift", Field::Num(drift.energy)),
            ("axial_momentum_drift", Field::Num(drift.axial_momentum)),
            ("radius_drift", Field::Num(drift.radius)),
            ("steps", Field::Int(samples.len() as i64 - 1)),
        ]),
    )
}

fn scan(out: Out, format: Format, args: &crate::ScanArgs) -> Result<(), Failure> {
    let geometry = match (args.energy, args.flat_a) {
        (Some(e), None) => Geometry::Sphere { energy: SphericalEnergy::unit(e)? },
        (None, Some(a)) => Geometry::Flat { a },
        _ => return Err(Failure::Usage("give exactly one of --energy and --flat-a".into())),
    };
    let mut candidates: Vec<InvariantCandidate> = Vec::new();
    for name in &args.candidates {
        candidates.push(
            named_candidate(name).ok_or_else(|| Failure::Usage(format!("--candidate: unknown candidate `{name}`")))?,
        );
    }
    if let (Some(f), Some(g)) = (&args.f, &args.g) {
        candidates.push(InvariantCandidate::from_expressions(&args.name, f, g, args.allow_asymmetric)?);
    }
    if candidates.is_empty() {
        candidates = match geometry {
            Geometry::Sphere { .. } => catalog(),
            Geometry::Flat { .. } => vec![flat_lambert_candidate(), flat_radius_chord_candidate()],
        };
    }
    if args.records.is_some() && candidates.len() != 1 {
        return Err(Failure::Usage("--records needs exactly one candidate".into()));
    }

    let base = sample_arcs(&geometry, args.samples as usize, args.seed, (0.0, MAX_SAMPLE_ECCENTRICITY))?;
    let options = ScanOptions {
        bin_tolerance: args.bin_tolerance,
        partner_steps: args.partner_steps as usize,
        partner_attempts: args.partner_attempts as usize,
    };
    let mut reports: Vec<ScanReport> = Vec::new();
    for candidate in &candidates {
        let outcome = run_scan(&geometry, candidate, &base, args.seed, &options)
            .map_err(|e| Failure::from(e).with_context(candidate.name()))?;
        if let Some(path) = &args.records {
            let file = std::fs::File::create(path)
                .map_err(|e| Failure::Usage(format!("--records {}: {e}", path.display())))?;
            write_records_csv(std::io::BufWriter::new(file), &outcome.records)?;
        }
        reports.push(outcome.report);
    }

    match format {
        Format::Json => json_document(out, "reports", &reports),
        Format::Csv => {
            let header = [
                "geometry", "energy", "candidate", "samples", "bins", "populated_bins", "max_spread",
                "bin_tolerance", "partners_attempted", "partners_found", "seed", "evidence",
            ];
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.geometry.to_string(),
                        json_number(r.energy),
                        r.candidate.clone(),
                        r.samples.to_string(),
                        r.bins.to_string(),
                        r.populated_bins.to_string(),
                        json_number(r.max_spread),
                        json_number(r.bin_tolerance),
                        r.partners_attempted.to_string(),
                        r.partners_found.to_string(),
                        r.seed.to_string(),
                        r.evidence.to_string(),
                    ]
                })
                .collect();
            csv_rows(out, &header, &rows)
        }
        Format::Plain => {
            for r in &reports {
                writeln!(
                    out,
                    "{} energy={} samples={} bins={} populated={} partners={}/{} max_spread={} : {}",
                    r.candidate,
                    plain_number(r.energy),
                    r.samples,
                    r.bins,
                    r.populated_bins,
                    r.partners_found,
                    r.partners_attempted,
                    plain_number(r.max_spread),
                    r.evidence
                )
                .map_err(io_failure)?;
            }
            Ok(())
        }
    }
}

impl Failure {
    fn with_context(self, candidate: &str) -> Self {
        match self {
            Failure::Numerical(m) => Failure::Numerical(format!("candidate `{candidate}`: {m}")),
            other => other,
        }
    }
}
