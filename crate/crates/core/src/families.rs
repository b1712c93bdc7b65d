//! Exact exponent algebra for the equation families.
//!
//! Every bound, critical exponent, critical condition and scaling exponent is
//! computed in `BigRational` arithmetic. Critical/subcritical boundaries are
//! knife-edge, so nothing here goes through floating point unless a caller
//! asks for it with [`to_f64`].

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact binary value of a finite float.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Binomial coefficient `C_n^k` as an exact rational.
pub fn binomial(n: u32, k: u32) -> Rational {
    if k > n {
        return Rational::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    Rational::from_integer(acc)
}

/// Renders a rational as an integer, a plain fraction, or both forms for JSON output.
pub fn rational_json(r: &Rational) -> Value {
    if r.is_integer() {
        if let Some(i) = r.to_integer().to_i64() {
            return json!(i);
        }
    }
    json!(to_f64(r))
}

pub fn rational_string(r: &Rational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {input:?} as an exact rational")]
pub struct ParseRationalError {
    pub input: String,
}

/// Parses `"3"`, `"-0.75"`, `"1e-3"`, `"2.5E2"` or `"7/3"` into an exact rational.
/// Decimal text is read digit by digit, so `"0.1"` becomes exactly `1/10`.
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError {
        input: input.to_string(),
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_rational(num).map_err(|_| err())?;
        let den = parse_rational(den).map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        return Ok(num / den);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..].parse().map_err(|_| err())?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all_digits = format!("{whole}{frac}");
    let numer = BigInt::from_str(if all_digits.is_empty() { "0" } else { &all_digits })
        .map_err(|_| err())?;
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

/// One of the equation classes, with the parameters that class needs.
#[derive(Debug, Clone, PartialEq)]
pub enum EquationFamily {
    /// `-Δu = u^q`.
    LaneEmden { n: u32 },
    /// `-Δu = |x|^{-t} u^q`.
    HardySobolev { n: u32, t: Rational },
    /// `(-Δ)^l u = |x|^{-t} v^{q2}`, `(-Δ)^l v = |x|^{-t} u^{q1}`.
    HardySobolevSystem { n: u32, l: u32, t: Rational },
    /// Weighted Hardy-Littlewood-Sobolev integral system.
    Whls {
        n: u32,
        alpha: Rational,
        beta1: Rational,
        beta2: Rational,
    },
    /// `u = g_α * u^q`.
    BesselSingle { n: u32, alpha: Rational },
    /// `u = g_α * v^{q2}`, `v = g_α * u^{q1}`.
    BesselSystem { n: u32, alpha: Rational },
    /// `-div(|x|^{-ap}|∇u|^{p-2}∇u) = |x|^{-b(q+1)} u^q`.
    Ckn {
        n: u32,
        p: Rational,
        a: Rational,
        b: Rational,
    },
    CknSystem {
        n: u32,
        p: Rational,
        a: Rational,
        b: Rational,
    },
    /// `F_k(D²u) = (-u)^q`, `u < 0`.
    KHessian { n: u32, k: u32 },
}

impl EquationFamily {
    pub fn n(&self) -> u32 {
        match self {
            EquationFamily::LaneEmden { n }
            | EquationFamily::HardySobolev { n, .. }
            | EquationFamily::HardySobolevSystem { n, .. }
            | EquationFamily::Whls { n, .. }
            | EquationFamily::BesselSingle { n, .. }
            | EquationFamily::BesselSystem { n, .. }
            | EquationFamily::Ckn { n, .. }
            | EquationFamily::CknSystem { n, .. }
            | EquationFamily::KHessian { n, .. } => *n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquationFamily::LaneEmden { .. } => "lane-emden",
            EquationFamily::HardySobolev { .. } => "hardy-sobolev",
            EquationFamily::HardySobolevSystem { .. } => "hardy-sobolev-system",
            EquationFamily::Whls { .. } => "whls",
            EquationFamily::BesselSingle { .. } => "bessel",
            EquationFamily::BesselSystem { .. } => "bessel-system",
            EquationFamily::Ckn { .. } => "ckn",
            EquationFamily::CknSystem { .. } => "ckn-system",
            EquationFamily::KHessian { .. } => "khessian",
        }
    }

    pub fn is_system(&self) -> bool {
        matches!(
            self,
            EquationFamily::HardySobolevSystem { .. }
                | EquationFamily::Whls { .. }
                | EquationFamily::BesselSystem { .. }
                | EquationFamily::CknSystem { .. }
        )
    }

    pub fn to_json(&self) -> Value {
        let mut obj = json!({ "kind": self.name(), "n": self.n() });
        let map = obj.as_object_mut().expect("object");
        let mut put = |key: &str, value: Value| {
            map.insert(key.to_string(), value);
        };
        match self {
            EquationFamily::LaneEmden { .. } => {}
            EquationFamily::HardySobolev { t, .. } => put("t", rational_json(t)),
            EquationFamily::HardySobolevSystem { l, t, .. } => {
                put("l", json!(l));
                put("t", rational_json(t));
            }
            EquationFamily::Whls {
                alpha,
                beta1,
                beta2,
                ..
            } => {
                put("alpha", rational_json(alpha));
                put("beta1", rational_json(beta1));
                put("beta2", rational_json(beta2));
            }
            EquationFamily::BesselSingle { alpha, .. }
            | EquationFamily::BesselSystem { alpha, .. } => put("alpha", rational_json(alpha)),
            EquationFamily::Ckn { p, a, b, .. } | EquationFamily::CknSystem { p, a, b, .. } => {
                put("p", rational_json(p));
                put("a", rational_json(a));
                put("b", rational_json(b));
            }
            EquationFamily::KHessian { k, .. } => put("k", json!(k)),
        }
        obj
    }

    /// Checks the parameter box of the family. Every failed bound is reported.
    pub fn validate(self) -> Result<ValidatedFamily, ValidationError> {
        let mut v = Vec::new();
        let n = self.n();
        let nr = int(n as i64);
        if n < 3 {
            v.push(Violation::new("n >= 3", format!("n = {n}")));
        }
        match &self {
            EquationFamily::LaneEmden { .. } => {}
            EquationFamily::HardySobolev { t, .. } => {
                if t.is_negative() {
                    v.push(Violation::new("t >= 0", format!("t = {}", rational_string(t))));
                }
                if *t >= int(2) {
                    v.push(Violation::new("t < 2", format!("t = {}", rational_string(t))));
                }
            }
            EquationFamily::HardySobolevSystem { l, t, .. } => {
                if *l < 1 {
                    v.push(Violation::new("l >= 1", format!("l = {l}")));
                }
                if 2 * l >= n {
                    v.push(Violation::new("l < n/2", format!("l = {l}, n = {n}")));
                }
                if t.is_negative() {
                    v.push(Violation::new("t >= 0", format!("t = {}", rational_string(t))));
                }
                if *t >= int(2 * *l as i64) {
                    v.push(Violation::new("t < 2l", format!("t = {}", rational_string(t))));
                }
            }
            EquationFamily::Whls {
                alpha,
                beta1,
                beta2,
                ..
            } => {
                check_alpha(alpha, &nr, &mut v);
                if beta1.is_negative() {
                    v.push(Violation::new("beta1 >= 0", rational_string(beta1)));
                }
                if beta2.is_negative() {
                    v.push(Violation::new("beta2 >= 0", rational_string(beta2)));
                }
                if beta1 + beta2 > *alpha {
                    v.push(Violation::new(
                        "beta1 + beta2 <= alpha",
                        format!("beta1 + beta2 = {}", rational_string(&(beta1 + beta2))),
                    ));
                }
            }
            EquationFamily::BesselSingle { alpha, .. }
            | EquationFamily::BesselSystem { alpha, .. } => check_alpha(alpha, &nr, &mut v),
            EquationFamily::Ckn { p, a, b, .. } | EquationFamily::CknSystem { p, a, b, .. } => {
                check_ckn_box(&nr, p, a, b, &mut v)
            }
            EquationFamily::KHessian { k, .. } => {
                if *k <= 1 {
                    v.push(Violation::new("k > 1", format!("k = {k}")));
                }
                if 2 * k >= n {
                    v.push(Violation::new("k < n/2", format!("k = {k}, n/2 = {}", n as f64 / 2.0)));
                }
            }
        }
        if v.is_empty() {
            Ok(ValidatedFamily(self))
        } else {
            Err(ValidationError { violations: v })
        }
    }
}

fn check_alpha(alpha: &Rational, n: &Rational, v: &mut Vec<Violation>) {
    if !alpha.is_positive() {
        v.push(Violation::new("alpha > 0", rational_string(alpha)));
    }
    if alpha >= n {
        v.push(Violation::new("alpha < n", rational_string(alpha)));
    }
}

fn check_ckn_box(n: &Rational, p: &Rational, a: &Rational, b: &Rational, v: &mut Vec<Violation>) {
    if *p <= int(1) {
        v.push(Violation::new("p > 1", format!("p = {}", rational_string(p))));
    }
    if a.is_negative() {
        v.push(Violation::new("a >= 0", format!("a = {}", rational_string(a))));
    }
    if p.is_positive() {
        let bound = (n - p) / p;
        if *a >= bound {
            v.push(Violation::new(
                "a < (n-p)/p",
                format!("a = {}, bound {}", rational_string(a), rational_string(&bound)),
            ));
        }
    }
    if b < a {
        v.push(Violation::new("a <= b", format!("b = {}", rational_string(b))));
    }
    if *b > a + int(1) {
        v.push(Violation::new("b <= a+1", format!("b = {}", rational_string(b))));
    }
    let denom = n - p + p * (b - a);
    if !denom.is_positive() {
        v.push(Violation::new(
            "n-p+p(b-a) must be positive",
            format!("n-p+p(b-a) = {}", rational_string(&denom)),
        ));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub bound: String,
    pub detail: String,
}

impl Violation {
    fn new(bound: &str, detail: impl Into<String>) -> Self {
        Violation {
            bound: bound.to_string(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated ({})", self.bound, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn mentions(&self, bound: &str) -> bool {
        self.violations.iter().any(|v| v.bound == bound)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("{op} is not defined for the {family} family")]
    Unsupported { op: &'static str, family: &'static str },
    #[error("{0}")]
    Domain(String),
}

/// A family whose parameter box has been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedFamily(EquationFamily);

impl ValidatedFamily {
    pub fn family(&self) -> &EquationFamily {
        &self.0
    }

    pub fn into_inner(self) -> EquationFamily {
        self.0
    }

    pub fn n(&self) -> u32 {
        self.0.n()
    }
}

impl std::ops::Deref for ValidatedFamily {
    type Target = EquationFamily;
    fn deref(&self) -> &EquationFamily {
        &self.0
    }
}

/// Exponent set by the WHLS box: `β_i/n < 1/(q_i+1) < (n-α+β_i)/n`.
pub fn validate_whls_exponents(
    family: &ValidatedFamily,
    q1: &Rational,
    q2: &Rational,
) -> Result<(), ValidationError> {
    let EquationFamily::Whls {
        n,
        alpha,
        beta1,
        beta2,
    } = family.family()
    else {
        return Ok(());
    };
    let nr = int(*n as i64);
    let mut v = Vec::new();
    for (label, q, beta) in [("q1", q1, beta1), ("q2", q2, beta2)] {
        if !q.is_positive() {
            v.push(Violation::new("q > 0", format!("{label} = {}", rational_string(q))));
            continue;
        }
        let inv = (q + int(1)).recip();
        if inv <= beta / &nr {
            v.push(Violation::new(
                "beta/n < 1/(q+1)",
                format!("{label}: 1/(q+1) = {}", rational_string(&inv)),
            ));
        }
        if inv >= (&nr - alpha + beta) / &nr {
            v.push(Violation::new(
                "1/(q+1) < (n-alpha+beta)/n",
                format!("{label}: 1/(q+1) = {}", rational_string(&inv)),
            ));
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { violations: v })
    }
}

/// Where a family becomes critical.
#[derive(Debug, Clone, PartialEq)]
pub enum Criticality {
    /// Single equations (and the CKN system off `p = 2`, on its diagonal).
    Exponent(Rational),
    /// Systems: `1/(q1+1) + 1/(q2+1) = rhs`.
    Condition { rhs: Rational },
}

impl Criticality {
    /// Exponent on the diagonal `q1 = q2`.
    pub fn diagonal(&self) -> Rational {
        match self {
            Criticality::Exponent(q) => q.clone(),
            Criticality::Condition { rhs } => int(2) / rhs - int(1),
        }
    }
}

pub fn critical_exponent(family: &ValidatedFamily) -> Criticality {
    let n = int(family.n() as i64);
    let one = int(1);
    let two = int(2);
    match family.family() {
        EquationFamily::LaneEmden { .. } => Criticality::Exponent((&n + &two) / (&n - &two)),
        EquationFamily::HardySobolev { t, .. } => {
            Criticality::Exponent((&n + &two - &two * t) / (&n - &two))
        }
        EquationFamily::HardySobolevSystem { l, t, .. } => {
            let two_l = int(2 * *l as i64);
            Criticality::Condition {
                rhs: (&n - two_l) / (&n - t),
            }
        }
        EquationFamily::Whls {
            alpha,
            beta1,
            beta2,
            ..
        } => Criticality::Condition {
            rhs: (&n - alpha + beta1 + beta2) / &n,
        },
        EquationFamily::BesselSingle { alpha, .. } => {
            Criticality::Exponent((&n + alpha) / (&n - alpha))
        }
        EquationFamily::BesselSystem { alpha, .. } => Criticality::Condition {
            rhs: (&n - alpha) / &n,
        },
        EquationFamily::Ckn { p, a, b, .. } => Criticality::Exponent(ckn_critical(&n, p, a, b)),
        EquationFamily::CknSystem { p, a, b, .. } => {
            if *p == two {
                Criticality::Condition {
                    rhs: (&n + &two * (b - a - &one)) / &n,
                }
            } else {
                Criticality::Exponent(ckn_critical(&n, p, a, b))
            }
        }
        EquationFamily::KHessian { k, .. } => {
            let k = int(*k as i64);
            Criticality::Exponent((&n + &two) * &k / (&n - &two * &k))
        }
    }
}

fn ckn_critical(n: &Rational, p: &Rational, a: &Rational, b: &Rational) -> Rational {
    n * p / (n - p + p * (b - a)) - int(1)
}

/// `nk/(n-2k)`; no negative solution exists at or below it.
pub fn serrin_exponent(family: &ValidatedFamily) -> Result<Rational, FamilyError> {
    match family.family() {
        EquationFamily::KHessian { n, k } => {
            let n = int(*n as i64);
            let k = int(*k as i64);
            Ok(&n * &k / (&n - int(2) * &k))
        }
        other => Err(FamilyError::Unsupported {
            op: "serrin_exponent",
            family: other.name(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position of an exponent relative to a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryPosition {
    Below,
    Boundary,
    Above,
}

impl BoundaryPosition {
    pub fn of(value: &Rational, threshold: &Rational) -> Self {
        match value.cmp(threshold) {
            std::cmp::Ordering::Less => BoundaryPosition::Below,
            std::cmp::Ordering::Equal => BoundaryPosition::Boundary,
            std::cmp::Ordering::Greater => BoundaryPosition::Above,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryPosition::Below => "below",
            BoundaryPosition::Boundary => "boundary",
            BoundaryPosition::Above => "above",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub regime: Regime,
    /// Pohozaev scaling exponent (or condition residual for systems); zero exactly at criticality.
    pub defect: Rational,
    /// k-Hessian only: position of `q` relative to the Serrin exponent.
    pub serrin: Option<BoundaryPosition>,
}

impl Classification {
    pub fn is_critical(&self) -> bool {
        self.defect.is_zero()
    }

    /// Bessel families: the existence range is open, so the boundary is excluded.
    pub fn admissible(&self) -> bool {
        self.regime == Regime::Subcritical
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "regime": self.regime.as_str(),
            "defect": to_f64(&self.defect),
            "defect_exact": rational_string(&self.defect),
        });
        if let Some(pos) = self.serrin {
            v["serrin"] = json!(pos.as_str());
        }
        v
    }
}

/// `orientation` is the sign the defect takes on the subcritical side.
fn regime_from(defect: &Rational, subcritical_sign_positive: bool) -> Regime {
    if defect.is_zero() {
        Regime::Critical
    } else if defect.is_positive() == subcritical_sign_positive {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    }
}

fn inv_sum(q1: &Rational, q2: &Rational) -> Rational {
    (q1 + int(1)).recip() + (q2 + int(1)).recip()
}

/// Classifies `q` (or `(q1, q2)` for systems) against the family's critical exponent.
///
/// Defects: Hardy-Sobolev `(n-2) - 2(n-t)/(q+1)`; CKN `n - p(a+1) - pn/(q+1) + pb`;
/// k-Hessian `n/(q+1) - (n-2k)/(k+1)`; Bessel `n(q-1)/(q+1) - α`; systems
/// `1/(q1+1) + 1/(q2+1) - rhs`, except the Bessel system which reports the margin
/// `n(1/(q1+1) + 1/(q2+1)) - (n-α)`.
pub fn classify(
    family: &ValidatedFamily,
    q: &Rational,
    q2: Option<&Rational>,
) -> Result<Classification, FamilyError> {
    let one = int(1);
    let two = int(2);
    if *q <= one {
        return Err(FamilyError::Domain(format!(
            "exponent must exceed 1, got {}",
            rational_string(q)
        )));
    }
    let n = int(family.n() as i64);
    let second = || -> Result<&Rational, FamilyError> {
        let q2 = q2.ok_or_else(|| FamilyError::Domain("system needs q2".into()))?;
        if *q2 <= int(1) {
            return Err(FamilyError::Domain(format!(
                "exponent must exceed 1, got {}",
                rational_string(q2)
            )));
        }
        Ok(q2)
    };
    let qp1 = q + &one;
    let out = match family.family() {
        EquationFamily::LaneEmden { .. } => {
            let defect = (&n - &two) - &two * &n / &qp1;
            Classification {
                regime: regime_from(&defect, false),
                defect,
                serrin: None,
            }
        }
        EquationFamily::HardySobolev { t, .. } => {
            let defect = (&n - &two) - &two * (&n - t) / &qp1;
            Classification {
                regime: regime_from(&defect, false),
                defect,
                serrin: None,
            }
        }
        EquationFamily::Ckn { p, a, b, .. } => {
            let defect = &n - p * (a + &one) - p * &n / &qp1 + p * b;
            Classification {
                regime: regime_from(&defect, false),
                defect,
                serrin: None,
            }
        }
        EquationFamily::KHessian { k, .. } => {
            let kr = int(*k as i64);
            let defect = &n / &qp1 - (&n - &two * &kr) / (&kr + &one);
            let serrin = serrin_exponent(family)?;
            Classification {
                regime: regime_from(&defect, true),
                defect,
                serrin: Some(BoundaryPosition::of(q, &serrin)),
            }
        }
        EquationFamily::BesselSingle { alpha, .. } => {
            let defect = &n * (q - &one) / &qp1 - alpha;
            Classification {
                regime: regime_from(&defect, false),
                defect,
                serrin: None,
            }
        }
        EquationFamily::BesselSystem { alpha, .. } => {
            let q2 = second()?;
            let margin = bessel_system_margin(family.n(), alpha, q, q2);
            Classification {
                regime: regime_from(&margin, true),
                defect: margin,
                serrin: None,
            }
        }
        EquationFamily::HardySobolevSystem { .. } | EquationFamily::Whls { .. } => {
            let q2 = second()?;
            let Criticality::Condition { rhs } = critical_exponent(family) else {
                unreachable!("systems carry a condition")
            };
            let defect = inv_sum(q, q2) - rhs;
            Classification {
                regime: regime_from(&defect, true),
                defect,
                serrin: None,
            }
        }
        EquationFamily::CknSystem { p, .. } => {
            let q2 = second()?;
            match critical_exponent(family) {
                Criticality::Condition { rhs } => {
                    let defect = inv_sum(q, q2) - rhs;
                    Classification {
                        regime: regime_from(&defect, true),
                        defect,
                        serrin: None,
                    }
                }
                Criticality::Exponent(_) if q == q2 => {
                    let EquationFamily::CknSystem { n, p, a, b } = family.family() else {
                        unreachable!()
                    };
                    let single = EquationFamily::Ckn {
                        n: *n,
                        p: p.clone(),
                        a: a.clone(),
                        b: b.clone(),
                    }
                    .validate()?;
                    return classify(&single, q, None);
                }
                Criticality::Exponent(_) => {
                    return Err(FamilyError::Domain(format!(
                        "CKN system with p = {} and q1 != q2 has no critical condition",
                        rational_string(p)
                    )))
                }
            }
        }
    };
    Ok(out)
}

/// `n(1/(q1+1) + 1/(q2+1)) - (n-α)`; weak solutions in `H^{α/2}` need it positive.
pub fn bessel_system_margin(n: u32, alpha: &Rational, q1: &Rational, q2: &Rational) -> Rational {
    let n = int(n as i64);
    &n * inv_sum(q1, q2) - (&n - alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaSource {
    Equation,
    Energy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaValue {
    pub source: SigmaSource,
    pub value: Rational,
}

/// Scaling exponents `σ` for `u_μ(x) = μ^σ u(μx)`: the value making the equation
/// invariant and the value making the energy invariant, per unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingExponents {
    pub first: [SigmaValue; 2],
    pub second: Option<[SigmaValue; 2]>,
}

impl ScalingExponents {
    fn pair(eq: Rational, en: Rational) -> [SigmaValue; 2] {
        [
            SigmaValue {
                source: SigmaSource::Equation,
                value: eq,
            },
            SigmaValue {
                source: SigmaSource::Energy,
                value: en,
            },
        ]
    }

    pub fn equation(&self) -> &Rational {
        &self.first[0].value
    }

    pub fn energy(&self) -> &Rational {
        &self.first[1].value
    }

    /// True when equation and energy exponents coincide for every unknown.
    pub fn agree(&self) -> bool {
        let ok = |p: &[SigmaValue; 2]| p[0].value == p[1].value;
        ok(&self.first) && self.second.as_ref().map_or(true, ok)
    }
}

pub fn scaling_exponents(
    family: &ValidatedFamily,
    q: &Rational,
    q2: Option<&Rational>,
) -> Result<ScalingExponents, FamilyError> {
    let one = int(1);
    let two = int(2);
    let n = int(family.n() as i64);
    let nonzero = |d: &Rational, what: &str| -> Result<(), FamilyError> {
        if d.is_zero() {
            Err(FamilyError::Domain(format!("{what} vanishes; scaling exponent undefined")))
        } else {
            Ok(())
        }
    };
    nonzero(&(q - &one), "q - 1")?;
    let qp1 = q + &one;
    let second = || -> Result<&Rational, FamilyError> {
        q2.ok_or_else(|| FamilyError::Domain("system needs q2".into()))
    };
    let single = |eq: Rational, en: Rational| ScalingExponents {
        first: ScalingExponents::pair(eq, en),
        second: None,
    };
    let system = |c: Rational, w: Rational, q2: &Rational| -> Result<ScalingExponents, FamilyError> {
        // σ1 = c(q2+1)/(q1q2-1), energy σ1 = (n-w)/(q1+1)
        let det = q * q2 - &one;
        nonzero(&det, "q1 q2 - 1")?;
        let q2p1 = q2 + &one;
        Ok(ScalingExponents {
            first: ScalingExponents::pair(&c * &q2p1 / &det, (&n - &w) / &qp1),
            second: Some(ScalingExponents::pair(&c * &qp1 / &det, (&n - &w) / &q2p1)),
        })
    };
    match family.family() {
        EquationFamily::LaneEmden { .. } => Ok(single(&two / (q - &one), &n / &qp1)),
        EquationFamily::HardySobolev { t, .. } => {
            Ok(single((&two - t) / (q - &one), (&n - t) / &qp1))
        }
        EquationFamily::Ckn { p, a, b, .. } => {
            let d = &qp1 - p;
            nonzero(&d, "q + 1 - p")?;
            let eq = (p * (&one + a) - b * &qp1) / d;
            Ok(single(eq, &n / &qp1 - b))
        }
        EquationFamily::KHessian { k, .. } => {
            let k = int(*k as i64);
            let d = q - &k;
            nonzero(&d, "q - k")?;
            Ok(single(&two * &k / d, &n / &qp1))
        }
        EquationFamily::HardySobolevSystem { l, t, .. } => {
            let c = int(2 * *l as i64) - t;
            system(c, t.clone(), second()?)
        }
        EquationFamily::Whls {
            alpha,
            beta1,
            beta2,
            ..
        } => system(alpha - beta1 - beta2, Rational::zero(), second()?),
        EquationFamily::CknSystem { p, a, b, .. } => {
            let q2 = second()?;
            let pm1 = p - &one;
            let det = q * q2 - &pm1 * &pm1;
            nonzero(&det, "q1 q2 - (p-1)^2")?;
            let c = p * (a + &one - b);
            let q2p1 = q2 + &one;
            Ok(ScalingExponents {
                first: ScalingExponents::pair(&c * (q2 + &pm1) / &det - b, &n / &qp1 - b),
                second: Some(ScalingExponents::pair(
                    &c * (q + &pm1) / &det - b,
                    &n / &q2p1 - b,
                )),
            })
        }
        other @ (EquationFamily::BesselSingle { .. } | EquationFamily::BesselSystem { .. }) => {
            Err(FamilyError::Unsupported {
                op: "scaling_exponents",
                family: other.name(),
            })
        }
    }
}

/// Outcome of the CKN system degeneracy test.
#[derive(Debug, Clone, PartialEq)]
pub enum CknInvariance {
    /// `p = 2`: the hyperplane `1/(q1+1) + 1/(q2+1) = (n+2(b-a-1))/n`.
    CaseP2 { satisfied: bool, residual: Rational },
    /// `q1 = q2`: reduces to the single CKN equation.
    CaseEqualQ { critical: Rational, matches: bool },
    /// Neither degenerate case; `(q1-q2)(p-2)` is the nonzero witness.
    None { witness: Rational },
}

impl CknInvariance {
    pub fn label(&self) -> &'static str {
        match self {
            CknInvariance::CaseP2 { .. } => "Case_p2",
            CknInvariance::CaseEqualQ { .. } => "Case_equal_q",
            CknInvariance::None { .. } => "None",
        }
    }
}

/// Decides which degenerate case makes the CKN system scaling invariant.
///
/// The non-degenerate verdict depends only on `(q1-q2)(p-2)`, so it is returned
/// before the parameter box is checked; the degenerate cases need a valid box.
pub fn ckn_system_invariance(
    n: u32,
    p: &Rational,
    a: &Rational,
    b: &Rational,
    q1: &Rational,
    q2: &Rational,
) -> Result<CknInvariance, FamilyError> {
    let two = int(2);
    let witness = (q1 - q2) * (p - &two);
    if !witness.is_zero() {
        return Ok(CknInvariance::None { witness });
    }
    let family = EquationFamily::CknSystem {
        n,
        p: p.clone(),
        a: a.clone(),
        b: b.clone(),
    }
    .validate()?;
    if *p == two {
        let Criticality::Condition { rhs } = critical_exponent(&family) else {
            unreachable!("p = 2 carries a condition")
        };
        let residual = inv_sum(q1, q2) - rhs;
        Ok(CknInvariance::CaseP2 {
            satisfied: residual.is_zero(),
            residual,
        })
    } else {
        let critical = critical_exponent(&family).diagonal();
        Ok(CknInvariance::CaseEqualQ {
            matches: *q1 == critical,
            critical,
        })
    }
}
