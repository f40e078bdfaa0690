//! `skepler`: planar and spherical Kepler computations from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 verification failure.

mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

const AFTER_HELP: &str = "\
Angles are in radians. Numbers in JSON output carry 17 significant digits;
plain output uses 15. JSON documents carry \"schema\": \"v1\".

Fixed numerical settings:
  partial-arc quadrature   adaptive Simpson, absolute tolerance 1e-12
  full-period quadrature   periodic trapezoid, node doubling to 1e-13
  orbit integration        Dormand-Prince 5(4), tolerance 1e-12, per-step
                           projection onto the sphere
  level-set scans          bin tolerance 1e-9, spread noise level 1e-9

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 verification failure.";

#[derive(Debug, Parser)]
#[command(name = "skepler", version, about = "Planar and spherical Kepler problems", after_help = AFTER_HELP)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value = "plain")]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Plain,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spherical energy of an ellipse: -1/(2a) + a(1 - e^2)/(2R^2).
    Energy(ElementsArgs),
    /// Maximal central angle theta_a of the spherical ellipse of a given energy.
    ThetaA(EnergyArgs),
    /// Planar passing time along an arc of eccentric anomaly.
    TofFlat(ArcArgs),
    /// Spherical passing time along an arc of eccentric anomaly.
    TofSphere(SphereArcArgs),
    /// Spherical period on the unit sphere, closed form with a quadrature cross-check.
    Period(PeriodArgs),
    /// All Lambert branches for given r1 + r2, chord and semi major axis.
    Lambert(LambertArgs),
    /// Run the invariant suites of every module and print a pass/fail table.
    Verify(VerifyArgs),
    /// Integrate the lifted motion on the sphere and compare with the projection.
    OrbitSim(OrbitSimArgs),
    /// Level-set scan of candidate invariant pairs at fixed energy.
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
pub struct ElementsArgs {
    /// Semi major axis of the planar ellipse.
    #[arg(long, value_parser = positive)]
    pub a: f64,
    /// Eccentricity in [0, 1).
    #[arg(long, value_parser = eccentricity)]
    pub e: f64,
    /// Sphere radius.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Spherical energy.
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub energy: f64,
    /// Sphere radius.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct ArcArgs {
    /// Semi major axis.
    #[arg(long, value_parser = positive)]
    pub a: f64,
    /// Eccentricity in [0, 1).
    #[arg(long, value_parser = eccentricity)]
    pub e: f64,
    /// Eccentric anomaly at the start of the arc.
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub u1: f64,
    /// Eccentric anomaly at the end of the arc.
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub u2: f64,
}

#[derive(Debug, Args)]
pub struct SphereArcArgs {
    #[command(flatten)]
    pub arc: ArcArgs,
    /// Sphere radius.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub radius: f64,
    /// Absolute tolerance of the adaptive quadrature.
    #[arg(long, value_parser = positive, default_value = "1e-12")]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["energy", "a"]))]
pub struct PeriodArgs {
    /// Spherical energy (unit sphere).
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub energy: Option<f64>,
    /// Semi major axis; the energy is computed from --a and --e.
    #[arg(long, value_parser = positive, requires = "e")]
    pub a: Option<f64>,
    /// Eccentricity used with --a, or to pick the quadrature orbit with --energy.
    #[arg(long, value_parser = eccentricity)]
    pub e: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LambertArgs {
    /// r1 + r2.
    #[arg(long, value_parser = non_negative)]
    pub sum: f64,
    /// Chord between the endpoints.
    #[arg(long, value_parser = non_negative)]
    pub c: f64,
    /// Semi major axis.
    #[arg(long, value_parser = positive)]
    pub a: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Seed of the randomized checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OrbitSimArgs {
    #[command(flatten)]
    pub arc: ArcArgs,
    /// Sphere radius.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub radius: f64,
    /// Largest integrator step.
    #[arg(long, value_parser = positive, default_value = "0.05")]
    pub dt_max: f64,
    /// Local error tolerance of the integrator.
    #[arg(long, value_parser = positive, default_value = "1e-12")]
    pub tolerance: f64,
    /// Also write the trajectory (t, tau, qx, qy, qz, Qx, Qy) as CSV to this file.
    #[arg(long)]
    pub trajectory: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("geometry").required(true).args(["energy", "flat_a"]))]
pub struct ScanArgs {
    /// Spherical energy of the sampled orbits (unit sphere).
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub energy: Option<f64>,
    /// Scan planar orbits of this semi major axis instead (validation harness).
    #[arg(long, value_parser = positive)]
    pub flat_a: Option<f64>,
    /// Number of base samples.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Seed of the sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Catalog candidate to scan; repeatable. Default: the whole catalog
    /// (sum-theta, half-tan, tan, cos), or flat-lambert and flat-r1-c with --flat-a.
    #[arg(long = "candidate")]
    pub candidates: Vec<String>,
    /// Expression for f in t1, t2, t12 (with --g), e.g. "math::tan(t1) + math::tan(t2)".
    #[arg(long, requires = "g")]
    pub f: Option<String>,
    /// Expression for g in t1, t2, t12 (with --f).
    #[arg(long, requires = "f")]
    pub g: Option<String>,
    /// Name reported for the expression candidate.
    #[arg(long, default_value = "custom")]
    pub name: String,
    /// Accept expression candidates that are not symmetric in (t1, t2).
    #[arg(long)]
    pub allow_asymmetric: bool,
    /// Pitch of the (f, g) grid.
    #[arg(long, value_parser = positive, default_value = "1e-9")]
    pub bin_tolerance: f64,
    /// Continuation steps per partner.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub partner_steps: u64,
    /// Partner eccentricities tried per base sample.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub partner_attempts: u64,
    /// Write the scanned samples as CSV to this file (single candidate only).
    #[arg(long)]
    pub records: Option<std::path::PathBuf>,
}

fn finite(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err("must be positive".into())
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err("must not be negative".into())
    }
}

fn eccentricity(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if (0.0..1.0).contains(&x) {
        Ok(x)
    } else {
        Err("must lie in [0, 1)".into())
    }
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::SUCCESS
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand | ErrorKind::MissingSubcommand => {
                    eprintln!("error: a subcommand is required; see `skepler --help`");
                    ExitCode::from(1)
                }
                _ => {
                    let text = err.to_string();
                    eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
                    ExitCode::from(1)
                }
            };
        }
    };
    let mut out = Vec::new();
    let result = commands::run(&cli, &mut out);
    let _ = std::io::stdout().write_all(&out);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(m) | Failure::Numerical(m) | Failure::Verification(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
