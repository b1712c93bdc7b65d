//! Radial forms of the Laplace, weighted p-Laplace, k-Hessian and Schrödinger operators.

use thiserror::Error;

use crate::families::{self, to_f64, EquationFamily};
use crate::profiles::RadialProfile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    /// `-Δu = -(u'' + (n-1)u'/r)`.
    Laplace { n: u32 },
    /// `-r^{1-n} (r^{n-1-ap} |u'|^{p-2} u')'`.
    WeightedPLaplace { n: u32, p: f64, a: f64 },
    /// `C_{n-1}^{k-1} (u'/r)^{k-1} u'' + C_{n-1}^k (u'/r)^k`.
    KHessianRadial { n: u32, k: u32 },
    /// `-Δu + u`.
    SchrodingerLinear { n: u32 },
}

#[derive(Debug, Error, PartialEq)]
pub enum OpError {
    #[error("operator {0} is not defined at r = 0; evaluate at r > 0")]
    LimitRequired(&'static str),
    #[error("u' vanishes at r = {0} and p < 2 makes the flux singular")]
    CriticalPoint(f64),
    #[error("profile leaves the admissible cone at r = {r} (u' = {du})")]
    OutsideCone { r: f64, du: f64 },
    #[error("profile is not finite at r = {0}")]
    NonFinite(f64),
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("{op} is not available for {family}")]
    Unsupported { op: &'static str, family: String },
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::Laplace { .. } => "laplace",
            OperatorKind::WeightedPLaplace { .. } => "weighted-p-laplace",
            OperatorKind::KHessianRadial { .. } => "k-hessian",
            OperatorKind::SchrodingerLinear { .. } => "schrodinger",
        }
    }
}

/// Evaluates the operator on `u` at radius `r`.
///
/// At `r = 0` the Laplace and Schrödinger operators use `-n u''(0)` and the k-Hessian uses
/// `(C_{n-1}^{k-1} + C_{n-1}^k) u''(0)^k`, both requiring `u'(0) = 0`.
pub fn apply(op: &OperatorKind, u: &RadialProfile, r: f64) -> Result<f64, OpError> {
    if r < 0.0 {
        return Err(OpError::NegativeRadius(r));
    }
    let (du, d2u) = (u.deriv(r), u.deriv2(r));
    if !du.is_finite() || !d2u.is_finite() {
        return Err(OpError::NonFinite(r));
    }
    let out = match *op {
        OperatorKind::Laplace { n } => laplace(n, du, d2u, r)?,
        OperatorKind::SchrodingerLinear { n } => {
            let v = u.value(r);
            if !v.is_finite() {
                return Err(OpError::NonFinite(r));
            }
            laplace(n, du, d2u, r)? + v
        }
        OperatorKind::WeightedPLaplace { n, p, a } => {
            if r == 0.0 {
                return Err(OpError::LimitRequired(op.name()));
            }
            let abs = du.abs();
            let mag = if abs == 0.0 {
                if p < 2.0 {
                    return Err(OpError::CriticalPoint(r));
                } else if p == 2.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                abs.powf(p - 2.0)
            };
            let ap = a * p;
            -r.powf(-ap) * ((n as f64 - 1.0 - ap) * mag * du / r + (p - 1.0) * mag * d2u)
        }
        OperatorKind::KHessianRadial { n, k } => {
            let c1 = to_f64(&families::binomial(n - 1, k - 1));
            let c2 = to_f64(&families::binomial(n - 1, k));
            if r == 0.0 {
                if du != 0.0 {
                    return Err(OpError::LimitRequired(op.name()));
                }
                if d2u < 0.0 {
                    return Err(OpError::OutsideCone { r, du });
                }
                (c1 + c2) * d2u.powi(k as i32)
            } else {
                if du < 0.0 {
                    return Err(OpError::OutsideCone { r, du });
                }
                let g = du / r;
                c1 * g.powi(k as i32 - 1) * d2u + c2 * g.powi(k as i32)
            }
        }
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(OpError::NonFinite(r))
    }
}

fn laplace(n: u32, du: f64, d2u: f64, r: f64) -> Result<f64, OpError> {
    if r == 0.0 {
        if du != 0.0 {
            return Err(OpError::LimitRequired("laplace"));
        }
        Ok(-(n as f64) * d2u)
    } else {
        Ok(-(d2u + (n as f64 - 1.0) * du / r))
    }
}

/// Operator, weight power `w` and nonlinearity for the family's scalar equation `Op(u) = r^{-w} N(u)`.
pub fn equation_operator(family: &EquationFamily, q: f64) -> Result<(OperatorKind, f64), OpError> {
    let unsupported = || OpError::Unsupported {
        op: "residual",
        family: family.name().to_string(),
    };
    Ok(match family {
        EquationFamily::LaneEmden { n } => (OperatorKind::Laplace { n: *n }, 0.0),
        EquationFamily::HardySobolev { n, t } => (OperatorKind::Laplace { n: *n }, to_f64(t)),
        EquationFamily::Ckn { n, p, a, b } => (
            OperatorKind::WeightedPLaplace {
                n: *n,
                p: to_f64(p),
                a: to_f64(a),
            },
            to_f64(b) * (q + 1.0),
        ),
        EquationFamily::KHessian { n, k } => (OperatorKind::KHessianRadial { n: *n, k: *k }, 0.0),
        EquationFamily::BesselSingle { n, alpha } if *alpha == families::int(2) => {
            (OperatorKind::SchrodingerLinear { n: *n }, 0.0)
        }
        _ => return Err(unsupported()),
    })
}

/// Pointwise residual `Op(u)(r) - r^{-w} N(u(r))`, with `N(u) = |u|^{q-1}u` for positive
/// families and `(-u)^q` for the k-Hessian.
pub fn residual(family: &EquationFamily, q: f64, u: &RadialProfile, r: f64) -> Result<f64, OpError> {
    let (op, w) = equation_operator(family, q)?;
    let lhs = apply(&op, u, r)?;
    let v = u.value(r);
    let nonlin = match op {
        OperatorKind::KHessianRadial { .. } => {
            if v > 0.0 {
                return Err(OpError::OutsideCone { r, du: u.deriv(r) });
            }
            (-v).powf(q)
        }
        _ => v.abs().powf(q - 1.0) * v,
    };
    let weight = if w == 0.0 { 1.0 } else { r.powf(-w) };
    let out = lhs - weight * nonlin;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(OpError::NonFinite(r))
    }
}

/// `R(r) = F_k[u](r) / (-u(r))^q`.
pub fn extract_coefficient(u: &RadialProfile, n: u32, k: u32, q: f64, r: f64) -> Result<f64, OpError> {
    let lhs = apply(&OperatorKind::KHessianRadial { n, k }, u, r)?;
    let v = u.value(r);
    if !(v < 0.0) {
        return Err(OpError::OutsideCone { r, du: u.deriv(r) });
    }
    Ok(lhs / (-v).powf(q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientScan {
    pub min: f64,
    pub max: f64,
    pub double_bounded: bool,
    pub sign_change_at: Option<f64>,
}

/// Scans `R(r)` on `radii` and reports whether it stays between two positive constants.
pub fn coefficient_bounds(u: &RadialProfile, n: u32, k: u32, q: f64, radii: &[f64]) -> Result<CoefficientScan, OpError> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sign_change_at = None;
    for &r in radii {
        let c = match extract_coefficient(u, n, k, q, r) {
            Ok(c) => c,
            // the Hessian operator leaves the cone once R turns negative
            Err(OpError::OutsideCone { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if c <= 0.0 && sign_change_at.is_none() {
            sign_change_at = Some(r);
        }
        min = min.min(c);
        max = max.max(c);
    }
    Ok(CoefficientScan {
        min,
        max,
        double_bounded: min > 0.0 && max.is_finite(),
        sign_change_at,
    })
}
