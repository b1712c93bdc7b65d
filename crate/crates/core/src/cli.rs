//! Command-line frontend: exponent calculator, catalog verification, parameter scans, shooting runs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::families::{
    self, classify, critical_exponent, parse_rational, rational_json, rational_string, serrin_exponent, to_f64,
    Criticality, EquationFamily, Rational,
};
use crate::identities::{self, IdentityError};
use crate::potentials::{self, IntegralEquation};
use crate::profiles::{
    explicit_profile, fit_amplitude, ProfileKind, RadialProfile,
};
use crate::quadrature::{QuadratureError, QuadratureSpec};
use crate::radial_ops;
use crate::shooting::{self, ShootingError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "critex", version, about = "Critical exponents and identity checks for nonlinear elliptic equations")]
pub struct Cli {
    /// TOML file with default values for any flag (keys are the long flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical (and Serrin) exponents, optionally classifying q.
    Exponent(ExponentArgs),
    /// Residual, energy and Pohozaev checks for a catalog profile.
    Verify(VerifyArgs),
    /// Classification table over a grid of exponents or dilations.
    Scan(ScanArgs),
    /// Shooting runs.
    Shoot(ShootArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct FamilyArgs {
    #[arg(long)]
    pub family: Option<String>,
    #[arg(short = 'n', long = "n")]
    pub n: Option<u32>,
    #[arg(short = 'k', long = "k")]
    pub k: Option<u32>,
    #[arg(short = 'l', long = "l")]
    pub l: Option<u32>,
    #[arg(short = 't', long = "t", allow_hyphen_values = true)]
    pub t: Option<String>,
    #[arg(short = 'p', long = "p")]
    pub p: Option<String>,
    #[arg(short = 'a', long = "a", allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(short = 'b', long = "b", allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExponentArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(short = 'q', long = "q")]
    pub q: Option<String>,
    #[arg(long)]
    pub q2: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// hs-bubble, hls-bubble, ckn-extremal, hessian-fast or hessian-slow.
    #[arg(long)]
    pub profile: Option<String>,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(short = 'q', long = "q")]
    pub q: Option<String>,
    /// Threshold for every check.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long = "q-from")]
    pub q_from: Option<String>,
    #[arg(long = "q-to")]
    pub q_to: Option<String>,
    #[arg(long = "q-step")]
    pub q_step: Option<String>,
    /// Second exponent axis for systems.
    #[arg(long = "q2-from")]
    pub q2_from: Option<String>,
    #[arg(long = "q2-to")]
    pub q2_to: Option<String>,
    #[arg(long = "q2-step")]
    pub q2_step: Option<String>,
    /// Dilation axis: ratio of potential-side energies of the catalog profile.
    #[arg(long = "mu-from")]
    pub mu_from: Option<f64>,
    #[arg(long = "mu-to")]
    pub mu_to: Option<f64>,
    #[arg(long = "mu-step")]
    pub mu_step: Option<f64>,
    #[arg(short = 'q', long = "q")]
    pub q: Option<String>,
    /// Run the k-Hessian shooting match on every supercritical row.
    #[arg(long)]
    pub shoot: bool,
}

#[derive(Debug, Args)]
pub struct ShootArgs {
    #[arg(value_enum)]
    pub problem: Problem,
    #[arg(short = 'n', long = "n")]
    pub n: Option<u32>,
    #[arg(short = 'k', long = "k")]
    pub k: Option<u32>,
    #[arg(short = 'q', long = "q")]
    pub q: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// CSV file for the sampled trajectory (r,f,fp,residual).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Radius range of the Schrödinger trajectory export.
    #[arg(long = "r-max")]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    Khessian,
    Schrodinger,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<ShootingError> for CliError {
    fn from(e: ShootingError) -> Self {
        match e {
            ShootingError::Invalid(_) | ShootingError::Precondition(_) => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<families::FamilyError> for CliError {
    fn from(e: families::FamilyError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<families::ValidationError> for CliError {
    fn from(e: families::ValidationError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Outcome of a command: a report and whether every check passed.
#[derive(Debug, Clone)]
pub struct Report {
    pub record: Value,
    /// Rows for tabular output.
    pub rows: Vec<Map<String, Value>>,
    pub passed: bool,
    pub numerical_failure: bool,
    /// Extra files to write: (path, contents).
    pub attachments: Vec<(PathBuf, String)>,
}

impl Report {
    fn single(record: Value, passed: bool) -> Report {
        let rows = match &record {
            Value::Object(m) => vec![flatten(m)],
            _ => Vec::new(),
        };
        Report {
            record,
            rows,
            passed,
            numerical_failure: false,
            attachments: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if !self.passed {
            1
        } else if self.numerical_failure {
            3
        } else {
            0
        }
    }
}

/// Scalar fields only, nested objects joined with '.'.
fn flatten(m: &Map<String, Value>) -> Map<String, Value> {
    let mut out = Map::new();
    fn go(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
        match v {
            Value::Object(m) => {
                for (k, v) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    go(&key, v, out);
                }
            }
            Value::Array(_) => {
                out.insert(prefix.to_string(), Value::String(v.to_string()));
            }
            other => {
                out.insert(prefix.to_string(), other.clone());
            }
        }
    }
    for (k, v) in m {
        go(k, v, &mut out);
    }
    out
}

/// Defaults read from the config file.
#[derive(Debug, Clone, Default)]
pub struct Defaults(BTreeMap<String, toml::Value>);

impl Defaults {
    pub fn load(path: Option<&PathBuf>) -> Result<Defaults, CliError> {
        let Some(path) = path else {
            return Ok(Defaults::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(Defaults(table.into_iter().collect()))
    }

    fn text(&self, key: &str) -> Option<String> {
        self.0.get(key).map(|v| match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    fn string(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.text(key))
    }

    fn parse<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.text(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key {key} = {s:?} has the wrong type"))),
        }
    }
}

fn rational_arg(value: Option<String>, name: &str) -> Result<Option<Rational>, CliError> {
    value
        .map(|s| parse_rational(&s).map_err(|e| CliError::Usage(format!("--{name}: {e}"))))
        .transpose()
}

fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required parameter --{name}")))
}

fn resolve_family(args: &FamilyArgs, defaults: &Defaults, fallback: Option<&str>) -> Result<EquationFamily, CliError> {
    let name = defaults
        .string(&args.family, "family")
        .or(fallback.map(str::to_string))
        .ok_or_else(|| CliError::Usage("missing required parameter --family".into()))?;
    let n = required(defaults.parse(args.n, "n")?, "n")?;
    let rat = |flag: &Option<String>, key: &str| rational_arg(defaults.string(flag, key), key);
    let need = |flag: &Option<String>, key: &str| -> Result<Rational, CliError> { required(rat(flag, key)?, key) };
    let or_zero = |flag: &Option<String>, key: &str| -> Result<Rational, CliError> {
        Ok(rat(flag, key)?.unwrap_or_else(|| families::int(0)))
    };
    Ok(match name.as_str() {
        "lane-emden" => EquationFamily::LaneEmden { n },
        "hardy-sobolev" | "hs" => EquationFamily::HardySobolev {
            n,
            t: or_zero(&args.t, "t")?,
        },
        "hardy-sobolev-system" | "hs-system" => EquationFamily::HardySobolevSystem {
            n,
            l: required(defaults.parse(args.l, "l")?, "l")?,
            t: or_zero(&args.t, "t")?,
        },
        "whls" => EquationFamily::Whls {
            n,
            alpha: need(&args.alpha, "alpha")?,
            beta1: or_zero(&args.beta1, "beta1")?,
            beta2: or_zero(&args.beta2, "beta2")?,
        },
        "bessel" => EquationFamily::BesselSingle {
            n,
            alpha: need(&args.alpha, "alpha")?,
        },
        "bessel-system" => EquationFamily::BesselSystem {
            n,
            alpha: need(&args.alpha, "alpha")?,
        },
        "ckn" | "ckn-system" => {
            let (p, a, b) = (need(&args.p, "p")?, or_zero(&args.a, "a")?, or_zero(&args.b, "b")?);
            if name == "ckn" {
                EquationFamily::Ckn { n, p, a, b }
            } else {
                EquationFamily::CknSystem { n, p, a, b }
            }
        }
        "khessian" | "k-hessian" => EquationFamily::KHessian {
            n,
            k: required(defaults.parse(args.k, "k")?, "k")?,
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown family {other:?} (lane-emden, hardy-sobolev, hardy-sobolev-system, whls, bessel, bessel-system, ckn, ckn-system, khessian)"
            )))
        }
    })
}

fn envelope(command: &str, params: Value) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!("critex"));
    m.insert("version".into(), json!(VERSION));
    m.insert("command".into(), json!(command));
    m.insert("params".into(), params);
    m
}

fn criticality_json(c: &Criticality) -> (String, Value) {
    match c {
        Criticality::Exponent(q) => ("critical".into(), rational_json(q)),
        Criticality::Condition { rhs } => (
            "condition".into(),
            json!({
                "form": "1/(q1+1) + 1/(q2+1) = rhs",
                "rhs": rational_json(rhs),
                "rhs_exact": rational_string(rhs),
                "diagonal_critical": rational_json(&c.diagonal()),
            }),
        ),
    }
}

pub fn cmd_exponent(args: &ExponentArgs, defaults: &Defaults) -> Result<Report, CliError> {
    let family = resolve_family(&args.family, defaults, None)?;
    let q = rational_arg(defaults.string(&args.q, "q"), "q")?;
    let q2 = rational_arg(defaults.string(&args.q2, "q2"), "q2")?;
    let mut params = family.to_json();
    if let Some(q) = &q {
        params["q"] = json!(rational_string(q));
    }
    if let Some(q2) = &q2 {
        params["q2"] = json!(rational_string(q2));
    }
    let fam = family.clone().validate()?;
    let mut out = envelope("exponent", params);
    out.insert("family".into(), json!(family.name()));
    if let Ok(s) = serrin_exponent(&fam) {
        out.insert("serrin".into(), rational_json(&s));
    }
    let crit = critical_exponent(&fam);
    let (key, value) = criticality_json(&crit);
    out.insert(key, value);
    if let Criticality::Exponent(c) = &crit {
        out.insert("critical_exact".into(), json!(rational_string(c)));
    }
    if let Some(q) = &q {
        let cls = classify(&fam, q, q2.as_ref())?;
        out.insert("classification".into(), cls.to_json());
    }
    Ok(Report::single(Value::Object(out), true))
}

/// Catalog profile together with the equation and exponent it is checked against.
struct CatalogCase {
    family: EquationFamily,
    q: f64,
    q_exact: Rational,
    profile: RadialProfile,
    /// Integral-equation check instead of the differential residual.
    riesz_alpha: Option<f64>,
}

fn catalog_case(key: &str, args: &FamilyArgs, q_arg: Option<String>, defaults: &Defaults) -> Result<CatalogCase, CliError> {
    let n = required(defaults.parse(args.n, "n")?, "n")?;
    let rat = |flag: &Option<String>, name: &str| rational_arg(defaults.string(flag, name), name);
    let zero = families::int(0);
    let q_given = rational_arg(q_arg, "q")?;
    let crit_of = |family: &EquationFamily| -> Result<Rational, CliError> {
        Ok(critical_exponent(&family.clone().validate()?).diagonal())
    };
    let profile_err = |e: crate::profiles::ProfileError| CliError::Usage(e.to_string());
    let fitted = |shape: RadialProfile, family: &EquationFamily, q: f64| -> Result<f64, CliError> {
        fit_amplitude(&shape, family, q, 1.0).map_err(|e| CliError::Numerical(e.to_string()))
    };
    match key {
        "hs-bubble" => {
            let t = rat(&args.t, "t")?.unwrap_or(zero);
            let family = EquationFamily::HardySobolev { n, t: t.clone() };
            let q_exact = q_given.unwrap_or(crit_of(&family)?);
            let q = to_f64(&q_exact);
            let tf = to_f64(&t);
            let shape = explicit_profile(ProfileKind::HsBubble { n, t: tf, d: 1.0, c: 1.0 }).map_err(profile_err)?;
            let c = fitted(shape, &family, q)?;
            let profile = explicit_profile(ProfileKind::HsBubble { n, t: tf, d: 1.0, c }).map_err(profile_err)?;
            Ok(CatalogCase {
                family,
                q,
                q_exact,
                profile,
                riesz_alpha: None,
            })
        }
        "hls-bubble" => {
            let alpha = rat(&args.alpha, "alpha")?.unwrap_or_else(|| families::int(2));
            let af = to_f64(&alpha);
            let nr = families::int(n as i64);
            let q_exact = q_given.unwrap_or_else(|| (&nr + &alpha) / (&nr - &alpha));
            let q = to_f64(&q_exact);
            let shape = explicit_profile(ProfileKind::HlsBubble { n, alpha: af, a: 1.0, b: 1.0 }).map_err(profile_err)?;
            if alpha == families::int(2) {
                let family = EquationFamily::LaneEmden { n };
                let c = fitted(shape, &family, q)?;
                let profile =
                    explicit_profile(ProfileKind::HlsBubble { n, alpha: af, a: c, b: 1.0 }).map_err(profile_err)?;
                return Ok(CatalogCase {
                    family,
                    q,
                    q_exact,
                    profile,
                    riesz_alpha: None,
                });
            }
            // u = I_α(u^q): amplitude from the value at the origin
            let k0 = potentials::riesz_convolve_radial(&|s| shape.value(s).powf(q), &[1.0], n, af, 0.0)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let c = (shape.value(0.0) / k0).powf(1.0 / (q - 1.0));
            let profile = explicit_profile(ProfileKind::HlsBubble { n, alpha: af, a: c, b: 1.0 }).map_err(profile_err)?;
            Ok(CatalogCase {
                family: EquationFamily::Whls {
                    n,
                    alpha,
                    beta1: families::int(0),
                    beta2: families::int(0),
                },
                q,
                q_exact,
                profile,
                riesz_alpha: Some(af),
            })
        }
        "ckn-extremal" => {
            let p = required(rat(&args.p, "p")?, "p")?;
            let a = rat(&args.a, "a")?.unwrap_or_else(|| zero.clone());
            let b = rat(&args.b, "b")?.unwrap_or(zero);
            let family = EquationFamily::Ckn {
                n,
                p: p.clone(),
                a: a.clone(),
                b: b.clone(),
            };
            let q_exact = q_given.unwrap_or(crit_of(&family)?);
            let q = to_f64(&q_exact);
            let (p, a, b) = (to_f64(&p), to_f64(&a), to_f64(&b));
            let shape = explicit_profile(ProfileKind::CknExtremal { n, p, a, b, amplitude: 1.0 }).map_err(profile_err)?;
            let amplitude = fitted(shape, &family, q)?;
            let profile =
                explicit_profile(ProfileKind::CknExtremal { n, p, a, b, amplitude }).map_err(profile_err)?;
            Ok(CatalogCase {
                family,
                q,
                q_exact,
                profile,
                riesz_alpha: None,
            })
        }
        "hessian-fast" | "hessian-slow" => {
            let k = required(defaults.parse(args.k, "k")?, "k")?;
            let family = EquationFamily::KHessian { n, k };
            let crit = crit_of(&family)?;
            if key == "hessian-fast" {
                let q_exact = q_given.unwrap_or(crit);
                let profile = explicit_profile(ProfileKind::HessianFast { n, k }).map_err(profile_err)?;
                return Ok(CatalogCase {
                    family,
                    q: to_f64(&q_exact),
                    q_exact,
                    profile,
                    riesz_alpha: None,
                });
            }
            let q_exact = required(q_given, "q")?;
            let q = to_f64(&q_exact);
            let profile = explicit_profile(ProfileKind::HessianSlowPower { n, k, q }).map_err(profile_err)?;
            Ok(CatalogCase {
                family,
                q,
                q_exact,
                profile,
                riesz_alpha: None,
            })
        }
        other => Err(CliError::Usage(format!(
            "unknown profile {other:?} (hs-bubble, hls-bubble, ckn-extremal, hessian-fast, hessian-slow)"
        ))),
    }
}

/// Log-spaced radii on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum CheckStatus {
    Pass,
    Fail,
    InfiniteEnergy(String),
    Unsupported(String),
    Error(String),
}

impl CheckStatus {
    fn label(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::InfiniteEnergy(_) => "infinite-energy",
            CheckStatus::Unsupported(_) => "unsupported",
            CheckStatus::Error(_) => "non-convergence",
        }
    }
}

struct Check {
    name: &'static str,
    status: CheckStatus,
    value: Option<f64>,
    extra: Value,
}

impl Check {
    fn measured(name: &'static str, value: f64, tol: f64, extra: Value) -> Check {
        Check {
            name,
            status: if value <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
            value: Some(value),
            extra,
        }
    }

    fn from_identity_error(name: &'static str, e: IdentityError) -> Check {
        let status = match &e {
            IdentityError::InfiniteEnergy(reason) => CheckStatus::InfiniteEnergy(reason.clone()),
            IdentityError::Unsupported { .. } => CheckStatus::Unsupported(e.to_string()),
            _ => CheckStatus::Error(e.to_string()),
        };
        Check {
            name,
            status,
            value: None,
            extra: Value::Null,
        }
    }

    fn to_json(&self, tol: f64) -> Value {
        let mut v = json!({"status": self.status.label(), "value": self.value, "tol": tol});
        match &self.status {
            CheckStatus::InfiniteEnergy(m) | CheckStatus::Unsupported(m) | CheckStatus::Error(m) => {
                v["reason"] = json!(m)
            }
            _ => {}
        }
        if let Value::Object(extra) = &self.extra {
            for (k, x) in extra {
                v[k] = x.clone();
            }
        }
        v
    }
}

/// Max of `|residual| / max(1, |r^{-w} N(u)|)` over a log grid.
fn residual_max(case: &CatalogCase, radii: &[f64]) -> Result<f64, String> {
    let mut worst = 0.0f64;
    if let Some(alpha) = case.riesz_alpha {
        let n = case.family.n();
        for &r in radii {
            let res = potentials::integral_residual(IntegralEquation::Riesz, &case.profile, case.q, n, alpha, r)
                .map_err(|e| e.to_string())?;
            worst = worst.max(res.abs() / case.profile.value(r).abs().max(1.0));
        }
        return Ok(worst);
    }
    let (_, w) = radial_ops::equation_operator(&case.family, case.q).map_err(|e| e.to_string())?;
    for &r in radii {
        let res = radial_ops::residual(&case.family, case.q, &case.profile, r).map_err(|e| e.to_string())?;
        let scale = (case.profile.value(r).abs().powf(case.q) * r.powf(-w)).max(1.0);
        worst = worst.max(res.abs() / scale);
    }
    Ok(worst)
}

pub fn cmd_verify(args: &VerifyArgs, defaults: &Defaults, spec: &QuadratureSpec) -> Result<Report, CliError> {
    let key = required(defaults.string(&args.profile, "profile"), "profile")?;
    let tol = defaults.parse(args.tol, "tol")?.unwrap_or(1e-6);
    if !(tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let case = catalog_case(&key, &args.family, defaults.string(&args.q, "q"), defaults)?;
    let fam = case.family.clone().validate()?;
    let classification = classify(&fam, &case.q_exact, None).ok();

    let radii = if case.riesz_alpha.is_some() {
        vec![0.0, 0.5, 1.0, 2.0, 5.0]
    } else {
        log_grid(1e-3, 1e3, 200)
    };
    let residual = match residual_max(&case, &radii) {
        Ok(v) => Check::measured("residual", v, tol, json!({"radii": radii.len()})),
        Err(e) => Check {
            name: "residual",
            status: CheckStatus::Error(e),
            value: None,
            extra: Value::Null,
        },
    };
    let energy = match identities::energy_pair(&case.family, case.q, &case.profile, spec) {
        Ok(rep) => Check::measured("energy", rep.relative_gap, tol, rep.to_json()),
        Err(e) => Check::from_identity_error("energy", e),
    };
    let pohozaev = match identities::pohozaev_report(&case.family, case.q, &case.profile, spec) {
        Ok(rep) => Check::measured("pohozaev", rep.discrepancy(), tol, rep.to_json()),
        Err(e) => Check::from_identity_error("pohozaev", e),
    };
    let checks = [residual, energy, pohozaev];
    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    let numerical_failure = checks.iter().any(|c| matches!(c.status, CheckStatus::Error(_)));

    let mut params = json!({
        "profile": key,
        "family": case.family.to_json(),
        "q": case.q,
        "q_exact": rational_string(&case.q_exact),
        "tol": tol,
        "quadrature_rel_tol": spec.rel_tol,
    });
    params["profile_params"] = case.profile.kind().params_json();
    let mut out = envelope("verify", params);
    if let Some(c) = &classification {
        out.insert("classification".into(), c.to_json());
    }
    out.insert(
        "decay_class".into(),
        json!(case.profile.decay_class().as_str()),
    );
    out.insert("decay_power".into(), json!(case.profile.decay_power()));
    let mut rows = Vec::new();
    for c in &checks {
        out.insert(c.name.into(), c.to_json(tol));
        let mut row = Map::new();
        row.insert("check".into(), json!(c.name));
        row.insert("status".into(), json!(c.status.label()));
        row.insert("value".into(), json!(c.value));
        row.insert("tol".into(), json!(tol));
        rows.push(row);
    }
    out.insert("all_pass".into(), json!(passed && !numerical_failure));
    Ok(Report {
        record: Value::Object(out),
        rows,
        passed,
        numerical_failure,
        attachments: Vec::new(),
    })
}

/// Exact arithmetic progression `from, from+step, ...` up to `to`.
fn rational_axis(from: Option<String>, to: Option<String>, step: Option<String>, name: &str) -> Result<Option<Vec<Rational>>, CliError> {
    let from = rational_arg(from, &format!("{name}-from"))?;
    let Some(from) = from else {
        return Ok(None);
    };
    let to = required(rational_arg(to, &format!("{name}-to"))?, &format!("{name}-to"))?;
    let step = rational_arg(step, &format!("{name}-step"))?.unwrap_or_else(|| families::int(1));
    if step <= families::int(0) {
        return Err(CliError::Usage(format!("--{name}-step must be positive")));
    }
    let mut out = Vec::new();
    let mut x = from;
    while x <= to {
        out.push(x.clone());
        x += &step;
        if out.len() > 100_000 {
            return Err(CliError::Usage(format!("--{name} grid exceeds 100000 points")));
        }
    }
    Ok(Some(out))
}

/// The catalog profile the energy prediction refers to, if the family has one at `q`.
fn natural_profile(family: &EquationFamily, q: &Rational) -> Option<RadialProfile> {
    let fam = family.clone().validate().ok()?;
    let crit = critical_exponent(&fam).diagonal();
    let qf = to_f64(q);
    let kind = match family {
        EquationFamily::LaneEmden { n } => ProfileKind::HsBubble {
            n: *n,
            t: 0.0,
            d: 1.0,
            c: 1.0,
        },
        EquationFamily::HardySobolev { n, t } => ProfileKind::HsBubble {
            n: *n,
            t: to_f64(t),
            d: 1.0,
            c: 1.0,
        },
        EquationFamily::Ckn { n, p, a, b } => ProfileKind::CknExtremal {
            n: *n,
            p: to_f64(p),
            a: to_f64(a),
            b: to_f64(b),
            amplitude: 1.0,
        },
        EquationFamily::KHessian { n, k } => {
            if *q == crit {
                ProfileKind::HessianFast { n: *n, k: *k }
            } else if *q > crit {
                ProfileKind::HessianSlowPower { n: *n, k: *k, q: qf }
            } else {
                return None;
            }
        }
        _ => return None,
    };
    explicit_profile(kind).ok()
}

fn scan_row(
    family: &EquationFamily,
    q: &Rational,
    q2: Option<&Rational>,
    shoot: bool,
) -> Map<String, Value> {
    let mut row = Map::new();
    row.insert("q".into(), json!(to_f64(q)));
    row.insert("q_exact".into(), json!(rational_string(q)));
    if let Some(q2) = q2 {
        row.insert("q2".into(), json!(to_f64(q2)));
        row.insert("q2_exact".into(), json!(rational_string(q2)));
    }
    if let (EquationFamily::CknSystem { n, p, a, b }, Some(q2)) = (family, q2) {
        match families::ckn_system_invariance(*n, p, a, b, q, q2) {
            Ok(inv) => {
                row.insert("invariance".into(), json!(inv.label()));
                match inv {
                    families::CknInvariance::CaseP2 { satisfied, residual } => {
                        row.insert("hyperplane".into(), json!(satisfied));
                        row.insert("hyperplane_residual".into(), json!(rational_string(&residual)));
                    }
                    families::CknInvariance::CaseEqualQ { matches, .. } => {
                        row.insert("hyperplane".into(), json!(matches));
                    }
                    families::CknInvariance::None { witness } => {
                        row.insert("witness".into(), json!(rational_string(&witness)));
                    }
                }
            }
            Err(_) => {
                row.insert("invariance".into(), json!("error"));
            }
        }
    }
    let fam = match family.clone().validate() {
        Ok(f) => f,
        Err(e) => {
            row.insert("error".into(), json!(e.to_string()));
            return row;
        }
    };
    match classify(&fam, q, q2) {
        Ok(c) => {
            row.insert("regime".into(), json!(c.regime.as_str()));
            row.insert("defect".into(), json!(to_f64(&c.defect)));
            row.insert("defect_exact".into(), json!(rational_string(&c.defect)));
            if let Some(pos) = c.serrin {
                row.insert("serrin".into(), json!(pos.as_str()));
            }
        }
        Err(e) => {
            row.insert("error".into(), json!(e.to_string()));
        }
    }
    if q2.is_none() {
        let energy = match natural_profile(family, q) {
            None => "n/a".to_string(),
            Some(u) => match identities::finite_energy_check(family, to_f64(q), &u) {
                Ok(()) => "finite".into(),
                Err(IdentityError::InfiniteEnergy(_)) => "infinite".into(),
                Err(_) => "n/a".into(),
            },
        };
        row.insert("energy".into(), json!(energy));
    }
    if shoot {
        let status = match family {
            EquationFamily::KHessian { n, k } => {
                let above = serrin_exponent(&fam).map(|s| *q > s).unwrap_or(false);
                if above {
                    match shooting::khessian_shoot_match(*n, *k, to_f64(q), 1e-10) {
                        Ok(res) => {
                            row.insert("shoot_A".into(), json!(res.a));
                            row.insert("shoot_gap".into(), json!(res.target_gap));
                            if res.matched { "matched" } else { "unmatched" }.to_string()
                        }
                        Err(ShootingError::NoBracket { .. }) => "no-bracket".into(),
                        Err(e) => {
                            row.insert("shoot_error".into(), json!(e.to_string()));
                            "error".into()
                        }
                    }
                } else {
                    "below-serrin".into()
                }
            }
            _ => "n/a".into(),
        };
        row.insert("shoot".into(), json!(status));
    }
    row
}

pub fn cmd_scan(args: &ScanArgs, defaults: &Defaults, spec: &QuadratureSpec) -> Result<Report, CliError> {
    let family = resolve_family(&args.family, defaults, None)?;
    let d = defaults;
    let mut params = json!({ "family": family.to_json() });
    let mu_from = d.parse(args.mu_from, "mu-from")?;
    if let Some(mu_from) = mu_from {
        let mu_to = required(d.parse(args.mu_to, "mu-to")?, "mu-to")?;
        let mu_step = d.parse(args.mu_step, "mu-step")?.unwrap_or(0.5);
        if !(mu_from > 0.0 && mu_step > 0.0 && mu_to >= mu_from) {
            return Err(CliError::Usage("mu grid needs 0 < mu-from <= mu-to and mu-step > 0".into()));
        }
        let fam = family.clone().validate()?;
        let q = match rational_arg(d.string(&args.q, "q"), "q")? {
            Some(q) => q,
            None => critical_exponent(&fam).diagonal(),
        };
        let u = natural_profile(&family, &q)
            .ok_or_else(|| CliError::Usage(format!("no catalog profile for {} at this q", family.name())))?;
        let count = ((mu_to - mu_from) / mu_step + 1e-9).floor() as usize + 1;
        let mus: Vec<f64> = (0..count).map(|i| mu_from + mu_step * i as f64).collect();
        let qf = to_f64(&q);
        let rows: Vec<Map<String, Value>> = mus
            .par_iter()
            .map(|&mu| {
                let mut row = Map::new();
                row.insert("mu".into(), json!(mu));
                match identities::scaling_invariance_check(&family, qf, &u, mu, spec) {
                    Ok(c) => {
                        row.insert("ratio".into(), json!(c.ratio));
                        row.insert("predicted".into(), json!(c.predicted));
                        row.insert("exponent".into(), json!(c.exponent));
                    }
                    Err(e) => {
                        row.insert("error".into(), json!(e.to_string()));
                    }
                }
                row
            })
            .collect();
        params["q"] = json!(rational_string(&q));
        params["mu"] = json!({"from": mu_from, "to": mu_to, "step": mu_step});
        return Ok(table_report("scan", params, rows));
    }
    let qs = rational_axis(
        d.string(&args.q_from, "q-from"),
        d.string(&args.q_to, "q-to"),
        d.string(&args.q_step, "q-step"),
        "q",
    )?
    .or(rational_arg(d.string(&args.q, "q"), "q")?.map(|q| vec![q]))
    .ok_or_else(|| CliError::Usage("scan needs --q-from/--q-to (or --mu-from/--mu-to)".into()))?;
    let q2s = rational_axis(
        d.string(&args.q2_from, "q2-from"),
        d.string(&args.q2_to, "q2-to"),
        d.string(&args.q2_step, "q2-step"),
        "q2",
    )?;
    if family.is_system() && q2s.is_none() {
        return Err(CliError::Usage(format!("{} scans need --q2-from/--q2-to", family.name())));
    }
    let shoot = args.shoot || d.parse(None, "shoot")?.unwrap_or(false);
    let points: Vec<(Rational, Option<Rational>)> = match &q2s {
        None => qs.iter().map(|q| (q.clone(), None)).collect(),
        Some(q2s) => qs
            .iter()
            .flat_map(|q| q2s.iter().map(move |q2| (q.clone(), Some(q2.clone()))))
            .collect(),
    };
    let rows: Vec<Map<String, Value>> = points
        .par_iter()
        .map(|(q, q2)| scan_row(&family, q, q2.as_ref(), shoot))
        .collect();
    params["points"] = json!(points.len());
    params["shoot"] = json!(shoot);
    Ok(table_report("scan", params, rows))
}

fn table_report(command: &str, params: Value, rows: Vec<Map<String, Value>>) -> Report {
    let mut out = envelope(command, params);
    out.insert(
        "rows".into(),
        Value::Array(rows.iter().cloned().map(Value::Object).collect()),
    );
    Report {
        record: Value::Object(out),
        rows,
        passed: true,
        numerical_failure: false,
        attachments: Vec::new(),
    }
}

pub fn cmd_shoot(args: &ShootArgs, defaults: &Defaults, spec: &QuadratureSpec) -> Result<Report, CliError> {
    let d = defaults;
    let n = required(d.parse(args.n, "n")?, "n")?;
    let q = required(d.parse(args.q, "q")?, "q")?;
    let trajectory = args.trajectory.clone().or_else(|| d.text("trajectory").map(PathBuf::from));
    match args.problem {
        Problem::Khessian => {
            let k = required(d.parse(args.k, "k")?, "k")?;
            let tol = d.parse(args.tol, "tol")?.unwrap_or(1e-12);
            let res = shooting::khessian_shoot_match(n, k, q, tol)?;
            let params = json!({"problem": "khessian", "n": n, "k": k, "q": q, "tol": tol});
            let mut out = envelope("shoot", params);
            if let Value::Object(m) = res.to_json() {
                out.extend(m);
            }
            out.insert("run_status".into(), json!(res.run.status.as_str()));
            let passed = res.matched;
            let mut rep = Report::single(Value::Object(out), passed);
            if let Some(path) = trajectory {
                rep.attachments.push((path, res.trajectory_csv()));
            }
            Ok(rep)
        }
        Problem::Schrodinger => {
            let tol = d.parse(args.tol, "tol")?.unwrap_or(1e-12);
            let gs = shooting::schrodinger_ground_state(n, q, tol)?;
            let family = EquationFamily::BesselSingle {
                n,
                alpha: families::int(2),
            };
            let params = json!({"problem": "schrodinger", "n": n, "q": q, "tol": tol});
            let mut out = envelope("shoot", params);
            if let Value::Object(m) = gs.to_json() {
                out.extend(m);
            }
            let identity_tol = 1e-3;
            let (passed, numerical) = match identities::energy_pair(&family, q, &gs.profile, spec) {
                Ok(rep) => {
                    out.insert("identity".into(), rep.to_json());
                    out.insert("identity_tol".into(), json!(identity_tol));
                    (rep.relative_gap < identity_tol, false)
                }
                Err(e) => {
                    out.insert("identity".into(), json!({"error": e.to_string()}));
                    (true, true)
                }
            };
            let mut rep = Report::single(Value::Object(out), passed);
            rep.numerical_failure = numerical;
            if let Some(path) = trajectory {
                let r_max = d.parse(args.r_max, "r-max")?.unwrap_or(20.0);
                rep.attachments.push((path, gs.trajectory_csv(r_max, 401)));
            }
            Ok(rep)
        }
    }
}

fn csv_cell(v: &Value) -> String {
    let s = match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.record).expect("serializable");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut header: Vec<String> = Vec::new();
            for row in &report.rows {
                for k in row.keys() {
                    if !header.contains(k) {
                        header.push(k.clone());
                    }
                }
            }
            let mut out = header.join(",");
            out.push('\n');
            for row in &report.rows {
                let cells: Vec<String> = header
                    .iter()
                    .map(|k| row.get(k).map(csv_cell).unwrap_or_default())
                    .collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Text => {
            let mut out = String::new();
            if let Value::Object(m) = &report.record {
                for (k, v) in flatten(m) {
                    if k == "rows" {
                        continue;
                    }
                    writeln!(out, "{k} = {}", csv_cell(&v)).expect("string write");
                }
            }
            for (i, row) in report.rows.iter().enumerate().filter(|_| report.record.get("rows").is_some()) {
                let cells: Vec<String> = row.iter().map(|(k, v)| format!("{k}={}", csv_cell(v))).collect();
                writeln!(out, "[{i}] {}", cells.join(" ")).expect("string write");
            }
            out
        }
    }
}

/// Parses, runs and writes output; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let defaults = Defaults::load(cli.config.as_ref())?;
    let spec = QuadratureSpec::from_env();
    spec.validate()
        .map_err(|e: QuadratureError| CliError::Usage(format!("quadrature settings: {e}")))?;
    let format = match cli.format {
        Some(f) => f,
        None => match defaults.text("format") {
            Some(s) => Format::from_str(&s, true).map_err(|_| CliError::Usage(format!("unknown format {s:?}")))?,
            None => Format::Json,
        },
    };
    let report = match &cli.command {
        Command::Exponent(a) => cmd_exponent(a, &defaults)?,
        Command::Verify(a) => cmd_verify(a, &defaults, &spec)?,
        Command::Scan(a) => cmd_scan(a, &defaults, &spec)?,
        Command::Shoot(a) => cmd_shoot(a, &defaults, &spec)?,
    };
    let text = render(&report, format);
    let output = cli.output.clone().or_else(|| defaults.text("output").map(PathBuf::from));
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    for (path, contents) in &report.attachments {
        std::fs::write(path, contents)?;
    }
    Ok(report.exit_code())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("critex").chain(args.iter().copied())).unwrap()
    }

    fn exponent(args: &[&str]) -> Value {
        let Command::Exponent(a) = parse(args).command else { panic!() };
        cmd_exponent(&a, &Defaults::default()).unwrap().record
    }

    #[test]
    fn exponent_examples() {
        let v = exponent(&["exponent", "--family", "khessian", "-n", "5", "-k", "2"]);
        assert_eq!(v["serrin"], json!(10));
        assert_eq!(v["critical"], json!(14));
        assert_eq!(v["version"], json!(VERSION));
        assert_eq!(v["params"]["k"], json!(2));
        let v = exponent(&["exponent", "--family", "hardy-sobolev", "-n", "4", "-t", "1"]);
        assert_eq!(v["critical"], json!(2));
        assert!(v.get("serrin").is_none());
        let v = exponent(&["exponent", "--family", "ckn", "-n", "3", "-p", "2", "-a", "0", "-b", "0"]);
        assert_eq!(v["critical"], json!(5));
        let v = exponent(&["exponent", "--family", "bessel-system", "-n", "3", "--alpha", "2", "-q", "3", "--q2", "3"]);
        assert_eq!(v["condition"]["rhs_exact"], json!("1/3"));
        assert_eq!(v["classification"]["defect_exact"], json!("1/2"));
    }

    #[test]
    fn exponent_usage_errors_name_the_bound() {
        let Command::Exponent(a) = parse(&["exponent", "--family", "khessian", "-n", "4", "-k", "2"]).command else {
            panic!()
        };
        let err = cmd_exponent(&a, &Defaults::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("k < n/2"), "{err}");
    }

    #[test]
    fn config_supplies_defaults_and_flags_override() {
        let mut table = BTreeMap::new();
        table.insert("family".to_string(), toml::Value::String("khessian".into()));
        table.insert("n".to_string(), toml::Value::Integer(7));
        table.insert("k".to_string(), toml::Value::Integer(2));
        let d = Defaults(table);
        let Command::Exponent(a) = parse(&["exponent", "-n", "5"]).command else { panic!() };
        let v = cmd_exponent(&a, &d).unwrap().record;
        assert_eq!(v["critical"], json!(14));
        let Command::Exponent(a) = parse(&["exponent"]).command else { panic!() };
        let v = cmd_exponent(&a, &d).unwrap().record;
        assert_eq!(v["critical"], json!(6));
        assert_eq!(v["params"]["n"], json!(7));
    }

    #[test]
    fn rational_axis_is_exact() {
        let axis = rational_axis(Some("8".into()), Some("20".into()), Some("1".into()), "q").unwrap().unwrap();
        assert_eq!(axis.len(), 13);
        let axis = rational_axis(Some("0.1".into()), Some("0.3".into()), Some("0.1".into()), "q").unwrap().unwrap();
        assert_eq!(axis.len(), 3);
        assert_eq!(axis[2], families::ratio(3, 10));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![flatten(json!({"q": 1, "regime": "critical"}).as_object().unwrap())];
        let rep = table_report("scan", json!({}), rows);
        let text = render(&rep, Format::Csv);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("q,regime"));
        assert_eq!(lines.next(), Some("1,critical"));
    }
}
