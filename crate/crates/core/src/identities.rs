//! Energy equalities, Pohozaev defects, scaling invariance and the critical minimum energy.

use serde_json::{json, Value};
use thiserror::Error;

use crate::families::{
    self, from_f64, int, scaling_exponents, to_f64, EquationFamily, FamilyError, Rational, ValidationError,
};
use crate::profiles::{explicit_profile, scale_profile, DecayClass, ProfileError, ProfileKind, RadialProfile};
use crate::quadrature::{
    integrate_radial_with_breaks, QuadratureError, QuadratureResult, QuadratureSpec, TailClass,
};
use crate::radial_ops::{self, OperatorKind};

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("{op} is not available for {family}")]
    Unsupported { op: &'static str, family: String },
    #[error("infinite energy: {0}")]
    InfiniteEnergy(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Quadrature(QuadratureError),
    #[error("parameter {0} has no exact rational value")]
    Inexact(&'static str),
}

impl From<QuadratureError> for IdentityError {
    fn from(e: QuadratureError) -> Self {
        match e {
            QuadratureError::Divergent { shell_ratio, radius } => IdentityError::InfiniteEnergy(format!(
                "quadrature tail does not shrink (shell ratio {shell_ratio:.4} at r = {radius:e})"
            )),
            other => IdentityError::Quadrature(other),
        }
    }
}

impl IdentityError {
    pub fn is_infinite_energy(&self) -> bool {
        matches!(self, IdentityError::InfiniteEnergy(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// Gradient-side energy.
    pub lhs: f64,
    /// Potential-side energy.
    pub rhs: f64,
    pub relative_gap: f64,
    pub lhs_quadrature: QuadratureResult,
    pub rhs_quadrature: QuadratureResult,
}

impl EnergyReport {
    fn new(lhs: QuadratureResult, rhs: QuadratureResult) -> EnergyReport {
        let scale = lhs.value.abs().max(rhs.value.abs());
        let gap = if scale == 0.0 { 0.0 } else { (lhs.value - rhs.value).abs() / scale };
        EnergyReport {
            lhs: lhs.value,
            rhs: rhs.value,
            relative_gap: gap,
            lhs_quadrature: lhs,
            rhs_quadrature: rhs,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relative_gap": self.relative_gap,
            "lhs_error_estimate": self.lhs_quadrature.error_estimate,
            "rhs_error_estimate": self.rhs_quadrature.error_estimate,
            "converged": self.lhs_quadrature.converged && self.rhs_quadrature.converged,
        })
    }
}

/// Energy functional data for a scalar family at exponent `q`.
#[derive(Debug, Clone, Copy)]
struct EnergyModel {
    n: u32,
    /// Gradient-side density at `r` (without `r^{n-1}`), from `u`.
    kind: LhsKind,
    /// Weight power on the potential side, `r^{-w}`.
    weight: f64,
    /// Homogeneity degree of the gradient side.
    degree: f64,
}

#[derive(Debug, Clone, Copy)]
enum LhsKind {
    Dirichlet,
    WeightedP { p: f64, a: f64 },
    Hessian { k: u32 },
    H1,
}

fn model(family: &EquationFamily, q: f64, op: &'static str) -> Result<EnergyModel, IdentityError> {
    let unsupported = || IdentityError::Unsupported {
        op,
        family: family.name().to_string(),
    };
    let n = family.n();
    Ok(match family {
        EquationFamily::LaneEmden { .. } => EnergyModel {
            n,
            kind: LhsKind::Dirichlet,
            weight: 0.0,
            degree: 2.0,
        },
        EquationFamily::HardySobolev { t, .. } => EnergyModel {
            n,
            kind: LhsKind::Dirichlet,
            weight: to_f64(t),
            degree: 2.0,
        },
        EquationFamily::Ckn { p, a, b, .. } => EnergyModel {
            n,
            kind: LhsKind::WeightedP {
                p: to_f64(p),
                a: to_f64(a),
            },
            weight: to_f64(b) * (q + 1.0),
            degree: to_f64(p),
        },
        EquationFamily::KHessian { k, .. } => EnergyModel {
            n,
            kind: LhsKind::Hessian { k: *k },
            weight: 0.0,
            degree: *k as f64 + 1.0,
        },
        EquationFamily::BesselSingle { alpha, .. } if *alpha == int(2) => EnergyModel {
            n,
            kind: LhsKind::H1,
            weight: 0.0,
            degree: 2.0,
        },
        _ => return Err(unsupported()),
    })
}

fn exact_param(x: f64, name: &'static str) -> Result<Rational, IdentityError> {
    from_f64(x).ok_or(IdentityError::Inexact(name))
}

/// Decides finiteness of both energies from the exact decay power `β`:
/// at infinity `β(q+1) + w > n` and the gradient-side analogue; at the origin, for
/// singular profiles, `β(q+1) + w < n`.
pub fn finite_energy_check(family: &EquationFamily, q: f64, u: &RadialProfile) -> Result<(), IdentityError> {
    let m = model(family, q, "energy")?;
    let Some(beta) = u.decay_power_exact().cloned() else {
        return Ok(());
    };
    if u.decay_class() == DecayClass::Exponential {
        return Ok(());
    }
    let qr = exact_param(q, "q")?;
    let n = int(m.n as i64);
    let w = match family {
        EquationFamily::HardySobolev { t, .. } => t.clone(),
        EquationFamily::Ckn { b, .. } => b * (&qr + int(1)),
        _ => int(0),
    };
    let pot = &beta * (&qr + int(1)) + &w;
    let grad = match m.kind {
        LhsKind::Dirichlet | LhsKind::H1 => (&beta + int(1)) * int(2),
        LhsKind::WeightedP { p, a } => {
            let (p, a) = (exact_param(p, "p")?, exact_param(a, "a")?);
            (&beta + int(1)) * &p + a * p
        }
        LhsKind::Hessian { k } => &beta + int(k as i64) * (&beta + int(2)),
    };
    let s = families::rational_string;
    if u.decay_class() == DecayClass::SingularAtOrigin {
        if pot >= n {
            return Err(IdentityError::InfiniteEnergy(format!(
                "origin: β(q+1) + w = {} ≥ n = {}",
                s(&pot),
                s(&n)
            )));
        }
        if grad >= n {
            return Err(IdentityError::InfiniteEnergy(format!(
                "origin: gradient exponent {} ≥ n = {}",
                s(&grad),
                s(&n)
            )));
        }
    }
    if pot <= n {
        return Err(IdentityError::InfiniteEnergy(format!(
            "tail: β(q+1) + w = {} ≤ n = {} (β = {})",
            s(&pot),
            s(&n),
            s(&beta)
        )));
    }
    if grad <= n {
        return Err(IdentityError::InfiniteEnergy(format!(
            "tail: gradient exponent {} ≤ n = {}",
            s(&grad),
            s(&n)
        )));
    }
    Ok(())
}

fn spec_for(u: &RadialProfile, spec: &QuadratureSpec) -> QuadratureSpec {
    if u.decay_class() == DecayClass::Exponential {
        spec.with_tail(TailClass::Exponential)
    } else {
        *spec
    }
}

fn breaks_of(u: &RadialProfile) -> Vec<f64> {
    u.breakpoints()
}

fn energy_terms(
    m: &EnergyModel,
    q: f64,
    u: &RadialProfile,
    spec: &QuadratureSpec,
) -> Result<(QuadratureResult, QuadratureResult), IdentityError> {
    let spec = spec_for(u, spec);
    let breaks = breaks_of(u);
    let n = m.n;
    let lhs = match m.kind {
        LhsKind::Dirichlet => integrate_radial_with_breaks(|r| u.deriv(r).powi(2), n, 0.0, &breaks, &spec)?,
        LhsKind::H1 => integrate_radial_with_breaks(
            |r| u.deriv(r).powi(2) + u.value(r).powi(2),
            n,
            0.0,
            &breaks,
            &spec,
        )?,
        LhsKind::WeightedP { p, a } => {
            integrate_radial_with_breaks(|r| u.deriv(r).abs().powf(p), n, a * p, &breaks, &spec)?
        }
        LhsKind::Hessian { k } => {
            let op = OperatorKind::KHessianRadial { n, k };
            integrate_radial_with_breaks(
                |r| match radial_ops::apply(&op, u, r) {
                    Ok(fk) => -u.value(r) * fk,
                    Err(_) => f64::NAN,
                },
                n,
                0.0,
                &breaks,
                &spec,
            )?
        }
    };
    let rhs = integrate_radial_with_breaks(|r| u.value(r).abs().powf(q + 1.0), n, m.weight, &breaks, &spec)?;
    Ok((lhs, rhs))
}

/// Gradient-side and potential-side energies of `u` for the family at exponent `q`.
pub fn energy_pair(
    family: &EquationFamily,
    q: f64,
    u: &RadialProfile,
    spec: &QuadratureSpec,
) -> Result<EnergyReport, IdentityError> {
    let m = model(family, q, "energy_pair")?;
    finite_energy_check(family, q, u)?;
    let (lhs, rhs) = energy_terms(&m, q, u, spec)?;
    Ok(EnergyReport::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub ratio: f64,
    pub predicted: f64,
    pub exponent: f64,
}

impl ScalingCheck {
    pub fn deviation(&self) -> f64 {
        (self.ratio - self.predicted).abs() / self.predicted.abs()
    }
}

/// Ratio of potential-side energies of `u_μ = μ^σ u(μ·)` and `u`, against `μ^{σ(q+1) - n + w}`.
pub fn scaling_invariance_check(
    family: &EquationFamily,
    q: f64,
    u: &RadialProfile,
    mu: f64,
    spec: &QuadratureSpec,
) -> Result<ScalingCheck, IdentityError> {
    if !(mu > 0.0) {
        return Err(IdentityError::Family(FamilyError::Domain(format!("mu must be positive, got {mu}"))));
    }
    let m = model(family, q, "scaling_invariance_check")?;
    let fam = family.clone().validate()?;
    let qr = exact_param(q, "q")?;
    let sigma = to_f64(scaling_exponents(&fam, &qr, None)?.equation());
    let exponent = sigma * (q + 1.0) - m.n as f64 + m.weight;
    if mu == 1.0 {
        return Ok(ScalingCheck {
            ratio: 1.0,
            predicted: 1.0,
            exponent,
        });
    }
    finite_energy_check(family, q, u)?;
    let scaled = scale_profile(u, mu, sigma);
    let spec = spec_for(u, spec);
    let energy = |v: &RadialProfile, scale: f64| -> Result<f64, IdentityError> {
        let breaks: Vec<f64> = breaks_of(u).iter().map(|b| b / scale).collect();
        Ok(integrate_radial_with_breaks(|r| v.value(r).abs().powf(q + 1.0), m.n, m.weight, &breaks, &spec)?.value)
    };
    Ok(ScalingCheck {
        ratio: energy(&scaled, mu)? / energy(u, 1.0)?,
        predicted: mu.powf(exponent),
        exponent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PohozaevReport {
    pub algebraic: Rational,
    pub numerical: f64,
    /// Amplitude placing `λu` on the Nehari manifold.
    pub nehari_amplitude: f64,
    pub step: f64,
}

impl PohozaevReport {
    pub fn algebraic_f64(&self) -> f64 {
        to_f64(&self.algebraic)
    }

    pub fn discrepancy(&self) -> f64 {
        (self.numerical - self.algebraic_f64()).abs()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "algebraic": families::rational_json(&self.algebraic),
            "numerical": self.numerical,
            "discrepancy": self.discrepancy(),
            "nehari_amplitude": self.nehari_amplitude,
        })
    }
}

/// Central-difference step in `μ`.
pub const POHOZAEV_STEP: f64 = 1e-4;

/// Numerical `dE(λu(x/μ))/dμ` at `μ = 1` on the Nehari manifold, normalized to the family's
/// algebraic defect, next to that defect.
pub fn pohozaev_report(
    family: &EquationFamily,
    q: f64,
    u: &RadialProfile,
    spec: &QuadratureSpec,
) -> Result<PohozaevReport, IdentityError> {
    let m = model(family, q, "pohozaev_report")?;
    if matches!(m.kind, LhsKind::H1) {
        return Err(IdentityError::Unsupported {
            op: "pohozaev_report",
            family: family.name().to_string(),
        });
    }
    let fam = family.clone().validate()?;
    let qr = exact_param(q, "q")?;
    let algebraic = families::classify(&fam, &qr, None)?.defect;
    finite_energy_check(family, q, u)?;
    let spec = spec.with_rel_tol(spec.rel_tol.min(1e-12));
    let (l0, r0) = energy_terms(&m, q, u, &spec)?;
    let lambda = (l0.value / r0.value).powf(1.0 / (q + 1.0 - m.degree));
    let v = u.times(lambda);
    let energy = |mu: f64| -> Result<f64, IdentityError> {
        let w = scale_profile(&v, 1.0 / mu, 0.0);
        let (l, r) = energy_terms(&m, q, &w, &spec)?;
        Ok(l.value / m.degree - r.value / (q + 1.0))
    };
    let h = POHOZAEV_STEP;
    let d1 = (energy(1.0 + h)? - energy(1.0 - h)?) / (2.0 * h);
    let d2 = (energy(1.0 + 2.0 * h)? - energy(1.0 - 2.0 * h)?) / (4.0 * h);
    let deriv = (4.0 * d1 - d2) / 3.0;
    let norm = l0.value * lambda.powf(m.degree);
    let numerical = match m.kind {
        LhsKind::Hessian { .. } => -deriv / norm,
        _ => m.degree * deriv / norm,
    };
    Ok(PohozaevReport {
        algebraic,
        numerical,
        nehari_amplitude: lambda,
        step: h,
    })
}

/// Relative gap between `∫|x|^{-t} u^{q1+1}` and `∫|x|^{-t} v^{q2+1}`.
pub fn system_energy_balance(
    n: u32,
    u: &RadialProfile,
    v: &RadialProfile,
    q1: f64,
    q2: f64,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<f64, IdentityError> {
    let side = |w: &RadialProfile, q: f64| -> Result<f64, IdentityError> {
        let spec = spec_for(w, spec);
        Ok(integrate_radial_with_breaks(|r| w.value(r).abs().powf(q + 1.0), n, t, &breaks_of(w), &spec)?.value)
    };
    let (a, b) = (side(u, q1)?, side(v, q2)?);
    let scale = a.abs().max(b.abs());
    Ok(if scale == 0.0 { 0.0 } else { (a - b).abs() / scale })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEnergy {
    pub n: u32,
    /// Rayleigh quotient `‖∇U‖² / ‖U‖²_{2n/(n-2)}` of the bubble.
    pub c_star: f64,
    /// `(α/2n) c_*^{n/α}` with `α = 2`.
    pub m: f64,
    pub scale: f64,
}

/// Critical minimum energy at `α = 2`, from the bubble `(b/(b²+r²))^{(n-2)/2}`.
pub fn min_energy_critical_with_scale(n: u32, b: f64, spec: &QuadratureSpec) -> Result<MinEnergy, IdentityError> {
    let u = explicit_profile(ProfileKind::HlsBubble {
        n,
        alpha: 2.0,
        a: 1.0,
        b,
    })?;
    let nf = n as f64;
    let p = 2.0 * nf / (nf - 2.0);
    let grad = integrate_radial_with_breaks(|r| u.deriv(r).powi(2), n, 0.0, &[b], spec)?.value;
    let lp = integrate_radial_with_breaks(|r| u.value(r).powf(p), n, 0.0, &[b], spec)?.value;
    let c_star = grad / lp.powf(2.0 / p);
    let alpha = 2.0;
    Ok(MinEnergy {
        n,
        c_star,
        m: alpha / (2.0 * nf) * c_star.powf(nf / alpha),
        scale: b,
    })
}

pub fn min_energy_critical(n: u32, spec: &QuadratureSpec) -> Result<MinEnergy, IdentityError> {
    if n < 3 {
        return Err(IdentityError::Family(FamilyError::Domain("n must be at least 3".into())));
    }
    min_energy_critical_with_scale(n, 1.0, spec)
}

/// `n(1/(q1+1) + 1/(q2+1)) - (n-α)`; positive iff admissible.
pub fn bessel_system_margin(n: u32, alpha: &Rational, q1: &Rational, q2: &Rational) -> Rational {
    families::bessel_system_margin(n, alpha, q1, q2)
}
