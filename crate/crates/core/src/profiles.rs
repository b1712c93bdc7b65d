//! Closed-form radial solutions with analytic derivatives.

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::families::{self, from_f64, to_f64, EquationFamily, Rational, ValidationError};
use crate::radial_ops::{self, OpError, OperatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayClass {
    Algebraic,
    Exponential,
    SingularAtOrigin,
}

impl DecayClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DecayClass::Algebraic => "algebraic",
            DecayClass::Exponential => "exponential",
            DecayClass::SingularAtOrigin => "singular-at-origin",
        }
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("invalid profile parameter: {0}")]
    Parameter(String),
    #[error("amplitude fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Operator(#[from] OpError),
}

/// Tabulated profile: cubic Hermite on `(f, f')` between nodes, optional closed-form tail.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProfile {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
    pub fpp: Vec<f64>,
    pub tail: Option<Shape>,
}

impl GridProfile {
    pub fn new(r: Vec<f64>, f: Vec<f64>, fp: Vec<f64>, fpp: Vec<f64>, tail: Option<Shape>) -> Result<Self, ProfileError> {
        let len = r.len();
        if len < 2 || f.len() != len || fp.len() != len || fpp.len() != len {
            return Err(ProfileError::Parameter("grid columns must have equal length >= 2".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ProfileError::Parameter("grid radii must increase strictly".into()));
        }
        Ok(GridProfile { r, f, fp, fpp, tail })
    }

    pub fn last_radius(&self) -> f64 {
        *self.r.last().expect("non-empty")
    }

    fn locate(&self, x: f64) -> usize {
        let i = self.r.partition_point(|&ri| ri <= x);
        i.clamp(1, self.r.len() - 1) - 1
    }

    fn hermite(&self, x: f64, val: &[f64], der: &[f64], order: usize) -> f64 {
        let i = self.locate(x);
        let (x0, x1) = (self.r[i], self.r[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1, d0, d1) = (val[i], val[i + 1], der[i] * h, der[i + 1] * h);
        match order {
            0 => {
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                    + (t3 - 2.0 * t2 + t) * d0
                    + (-2.0 * t3 + 3.0 * t2) * y1
                    + (t3 - t2) * d1
            }
            _ => {
                let t2 = t * t;
                ((6.0 * t2 - 6.0 * t) * y0
                    + (3.0 * t2 - 4.0 * t + 1.0) * d0
                    + (-6.0 * t2 + 6.0 * t) * y1
                    + (3.0 * t2 - 2.0 * t) * d1)
                    / h
            }
        }
    }

    fn eval(&self, x: f64, order: u8) -> f64 {
        if x > self.last_radius() {
            if let Some(tail) = &self.tail {
                return tail.eval(x, order);
            }
        }
        match order {
            0 => self.hermite(x, &self.f, &self.fp, 0),
            1 => self.hermite(x, &self.fp, &self.fpp, 0),
            _ => {
                let i = self.locate(x);
                let (x0, x1) = (self.r[i], self.r[i + 1]);
                let t = (x - x0) / (x1 - x0);
                self.fpp[i] * (1.0 - t) + self.fpp[i + 1] * t
            }
        }
    }
}

/// Elementary radial building blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `scale · (offset + r^power)^(-exponent)`.
    Bubble {
        scale: f64,
        offset: f64,
        power: f64,
        exponent: f64,
    },
    /// `coeff · r^(-exponent)`.
    Power { coeff: f64, exponent: f64 },
    /// `coeff · r^(-(n-1)/2) e^{-r} (1 + (n-1)(n-3)/(8r))`, leading decay of `(1-Δ)`-harmonic functions.
    Yukawa { coeff: f64, n: u32 },
    Constant(f64),
    Grid(Arc<GridProfile>),
}

impl Shape {
    pub fn eval(&self, r: f64, order: u8) -> f64 {
        match self {
            Shape::Bubble {
                scale,
                offset,
                power: m,
                exponent: g,
            } => {
                let rm = r.powf(*m);
                let s = offset + rm;
                match order {
                    0 => scale * s.powf(-g),
                    1 => {
                        if r == 0.0 && *m > 1.0 {
                            return 0.0;
                        }
                        -scale * g * m * r.powf(m - 1.0) * s.powf(-g - 1.0)
                    }
                    _ => {
                        let a = (m - 1.0) * r.powf(m - 2.0) * s.powf(-g - 1.0);
                        let b = if r == 0.0 {
                            0.0
                        } else {
                            (g + 1.0) * m * r.powf(2.0 * m - 2.0) * s.powf(-g - 2.0)
                        };
                        -scale * g * m * (a - b)
                    }
                }
            }
            Shape::Power { coeff, exponent: b } => match order {
                0 => coeff * r.powf(-b),
                1 => -b * coeff * r.powf(-b - 1.0),
                _ => b * (b + 1.0) * coeff * r.powf(-b - 2.0),
            },
            Shape::Yukawa { coeff, n } => {
                let m = (*n as f64 - 1.0) / 2.0;
                let c1 = (*n as f64 - 1.0) * (*n as f64 - 3.0) / 8.0;
                // g = r^{-m} e^{-r} (1 + c1/r)
                let e = (-r).exp();
                let base = r.powf(-m) * e;
                let p0 = 1.0 + c1 / r;
                // d/dr of r^{-m} e^{-r} = -(m/r + 1) r^{-m} e^{-r}
                let l1 = -(m / r + 1.0);
                let p1 = -c1 / (r * r);
                let p2 = 2.0 * c1 / (r * r * r);
                match order {
                    0 => coeff * base * p0,
                    1 => coeff * base * (l1 * p0 + p1),
                    _ => {
                        let l1p = m / (r * r);
                        coeff * base * ((l1 * l1 + l1p) * p0 + 2.0 * l1 * p1 + p2)
                    }
                }
            }
            Shape::Constant(c) => {
                if order == 0 {
                    *c
                } else {
                    0.0
                }
            }
            Shape::Grid(g) => g.eval(r, order),
        }
    }
}

/// Parameterised profile families.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// `c (d / (d² + r^{2-t}))^{(n-2)/(2-t)}`.
    HsBubble { n: u32, t: f64, d: f64, c: f64 },
    /// `a (b / (b² + r²))^{(n-α)/2}`, centred at the origin.
    HlsBubble { n: u32, alpha: f64, a: f64, b: f64 },
    /// `amplitude · ((n-p-pa) / (1 + r^γ))^δ`.
    CknExtremal {
        n: u32,
        p: f64,
        a: f64,
        b: f64,
        amplitude: f64,
    },
    /// `-L (1+r²)^{-(n-2k)/(2k)}`, `L = C_*^{1/(q-k)}` at the critical `q`.
    HessianFast { n: u32, k: u32 },
    /// `-C_A r^{-2k/(q-k)}`, exact on `(0, ∞)`.
    HessianSlowPower { n: u32, k: u32, q: f64 },
    /// `-amplitude (1+r²)^{-θ}`.
    HessianAnsatz {
        n: u32,
        k: u32,
        theta: f64,
        amplitude: f64,
    },
    Constant { value: f64 },
    /// Tabulated profile produced by the shooting module.
    NumericGrid {
        label: &'static str,
        grid: Arc<GridProfile>,
        decay_class: DecayClass,
        decay_power: Option<f64>,
        sign: Sign,
    },
}

impl ProfileKind {
    pub fn catalog_key(&self) -> &'static str {
        match self {
            ProfileKind::HsBubble { .. } => "hs-bubble",
            ProfileKind::HlsBubble { .. } => "hls-bubble",
            ProfileKind::CknExtremal { .. } => "ckn-extremal",
            ProfileKind::HessianFast { .. } => "hessian-fast",
            ProfileKind::HessianSlowPower { .. } => "hessian-slow",
            ProfileKind::HessianAnsatz { .. } => "hessian-ansatz",
            ProfileKind::Constant { .. } => "constant",
            ProfileKind::NumericGrid { label, .. } => label,
        }
    }

    pub fn params_json(&self) -> Value {
        match self {
            ProfileKind::HsBubble { n, t, d, c } => json!({"n": n, "t": t, "d": d, "c": c}),
            ProfileKind::HlsBubble { n, alpha, a, b } => {
                json!({"n": n, "alpha": alpha, "a": a, "b": b})
            }
            ProfileKind::CknExtremal {
                n,
                p,
                a,
                b,
                amplitude,
            } => json!({"n": n, "p": p, "a": a, "b": b, "amplitude": amplitude}),
            ProfileKind::HessianFast { n, k } => json!({"n": n, "k": k}),
            ProfileKind::HessianSlowPower { n, k, q } => json!({"n": n, "k": k, "q": q}),
            ProfileKind::HessianAnsatz {
                n,
                k,
                theta,
                amplitude,
            } => json!({"n": n, "k": k, "theta": theta, "amplitude": amplitude}),
            ProfileKind::Constant { value } => json!({ "value": value }),
            ProfileKind::NumericGrid { grid, .. } => {
                json!({"nodes": grid.r.len(), "last_radius": grid.last_radius()})
            }
        }
    }
}

/// A radial function `r ↦ prefactor · shape(dilation · r)` with derivative access.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    kind: ProfileKind,
    shape: Shape,
    prefactor: f64,
    dilation: f64,
    sign: Sign,
    decay_class: DecayClass,
    decay_power: Option<f64>,
    decay_power_exact: Option<Rational>,
}

impl RadialProfile {
    pub fn value(&self, r: f64) -> f64 {
        self.prefactor * self.shape.eval(self.dilation * r, 0)
    }

    pub fn deriv(&self, r: f64) -> f64 {
        self.prefactor * self.dilation * self.shape.eval(self.dilation * r, 1)
    }

    pub fn deriv2(&self, r: f64) -> f64 {
        self.prefactor * self.dilation * self.dilation * self.shape.eval(self.dilation * r, 2)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn decay_class(&self) -> DecayClass {
        self.decay_class
    }

    /// `β` with `|u| ~ r^{-β}` at infinity.
    pub fn decay_power(&self) -> Option<f64> {
        self.decay_power
    }

    /// `β` in exact arithmetic, derived from the construction parameters.
    pub fn decay_power_exact(&self) -> Option<&Rational> {
        self.decay_power_exact.as_ref()
    }

    /// Radii where the profile changes character: the end of a grid, the bubble knee.
    pub fn breakpoints(&self) -> Vec<f64> {
        let x = match &self.shape {
            Shape::Grid(g) => g.last_radius(),
            Shape::Bubble { offset, power, .. } if *offset > 0.0 => offset.powf(1.0 / power),
            _ => return Vec::new(),
        };
        vec![x / self.dilation]
    }

    /// Multiplies the profile by `factor`; sign flips when `factor < 0`.
    pub fn times(&self, factor: f64) -> RadialProfile {
        let mut out = self.clone();
        out.prefactor *= factor;
        if factor < 0.0 {
            out.sign = match self.sign {
                Sign::Positive => Sign::Negative,
                Sign::Negative => Sign::Positive,
            };
        }
        out
    }

    pub fn to_json(&self, radii: &[f64]) -> Value {
        let sampled: Vec<Value> = radii.iter().map(|&r| json!([r, self.value(r)])).collect();
        json!({
            "kind": self.kind.catalog_key(),
            "params": self.kind.params_json(),
            "prefactor": self.prefactor,
            "dilation": self.dilation,
            "decay_class": self.decay_class.as_str(),
            "decay_power": self.decay_power,
            "sampled": sampled,
        })
    }
}

impl fmt::Display for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.catalog_key(), self.kind.params_json())
    }
}

fn exact(x: f64) -> Option<Rational> {
    from_f64(x)
}

fn hessian_binomials(n: u32, k: u32) -> (f64, f64) {
    (
        to_f64(&families::binomial(n - 1, k - 1)),
        to_f64(&families::binomial(n - 1, k)),
    )
}

/// `C_* = ((n-2k)/k)^k (C_{n-1}^{k-1} + C_{n-1}^k)`.
pub fn hessian_c_star(n: u32, k: u32) -> Rational {
    let ratio = families::ratio(n as i64 - 2 * k as i64, k as i64);
    num_traits::Pow::pow(ratio, k) * (families::binomial(n - 1, k - 1) + families::binomial(n - 1, k))
}

/// Critical exponent `(n+2)k/(n-2k)` as a float.
fn hessian_critical(n: u32, k: u32) -> f64 {
    ((n + 2) * k) as f64 / (n as f64 - 2.0 * k as f64)
}

/// `L = C_*^{1/(q-k)}` at the critical exponent.
pub fn hessian_fast_amplitude(n: u32, k: u32) -> f64 {
    to_f64(&hessian_c_star(n, k)).powf(1.0 / (hessian_critical(n, k) - k as f64))
}

/// `C_A = [C_{n-1}^{k-1}/k · (n - 2qk/(q-k))]^{1/(q-k)} ((q-k)/(2k))^{k/(k-q)}`.
pub fn hessian_slow_amplitude(n: u32, k: u32, q: f64) -> f64 {
    let (c1, _) = hessian_binomials(n, k);
    let kf = k as f64;
    let base = c1 / kf * (n as f64 - 2.0 * q * kf / (q - kf));
    base.powf(1.0 / (q - kf)) * ((q - kf) / (2.0 * kf)).powf(kf / (kf - q))
}

/// `C_A^{q-k}` in exact arithmetic (rational whenever `q` is).
pub fn hessian_slow_amplitude_power(n: u32, k: u32, q: &Rational) -> Rational {
    let kr = families::int(k as i64);
    let nr = families::int(n as i64);
    let two = families::int(2);
    let base = families::binomial(n - 1, k - 1) / &kr * (&nr - &two * q * &kr / (q - &kr));
    // ((q-k)/(2k))^{-k}
    let beta = &two * &kr / (q - &kr);
    base * num_traits::Pow::pow(beta, k)
}

/// `[n(p-1)^{1-p}(n-p(1+a-b))^{-1}]^{(n-p(1+a-b))/(p²(1+a-b))}` as printed for the CKN extremal.
pub fn ckn_printed_c0(n: u32, p: f64, a: f64, b: f64) -> f64 {
    let e = 1.0 + a - b;
    let nf = n as f64;
    let base = nf * (p - 1.0).powf(1.0 - p) / (nf - p * e);
    base.powf((nf - p * e) / (p * p * e))
}

fn rat_param(name: &str, x: f64) -> Result<Rational, ProfileError> {
    from_f64(x).ok_or_else(|| ProfileError::Parameter(format!("{name} must be finite")))
}

fn positive(name: &str, x: f64) -> Result<(), ProfileError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ProfileError::Parameter(format!("{name} must be positive, got {x}")))
    }
}

/// Builds the closed-form profile for `kind`.
pub fn explicit_profile(kind: ProfileKind) -> Result<RadialProfile, ProfileError> {
    let (shape, sign, class, beta, beta_exact) = match &kind {
        ProfileKind::HsBubble { n, t, d, c } => {
            EquationFamily::HardySobolev {
                n: *n,
                t: rat_param("t", *t)?,
            }
            .validate()?;
            positive("d", *d)?;
            positive("c", *c)?;
            let m = 2.0 - t;
            let g = (*n as f64 - 2.0) / m;
            (
                Shape::Bubble {
                    scale: c * d.powf(g),
                    offset: d * d,
                    power: m,
                    exponent: g,
                },
                Sign::Positive,
                DecayClass::Algebraic,
                *n as f64 - 2.0,
                Some(families::int(*n as i64 - 2)),
            )
        }
        ProfileKind::HlsBubble { n, alpha, a, b } => {
            EquationFamily::BesselSingle {
                n: *n,
                alpha: rat_param("alpha", *alpha)?,
            }
            .validate()?;
            positive("a", *a)?;
            positive("b", *b)?;
            let g = (*n as f64 - alpha) / 2.0;
            (
                Shape::Bubble {
                    scale: a * b.powf(g),
                    offset: b * b,
                    power: 2.0,
                    exponent: g,
                },
                Sign::Positive,
                DecayClass::Algebraic,
                *n as f64 - alpha,
                exact(*alpha).map(|al| families::int(*n as i64) - al),
            )
        }
        ProfileKind::CknExtremal {
            n,
            p,
            a,
            b,
            amplitude,
        } => {
            EquationFamily::Ckn {
                n: *n,
                p: rat_param("p", *p)?,
                a: rat_param("a", *a)?,
                b: rat_param("b", *b)?,
            }
            .validate()?;
            positive("amplitude", *amplitude)?;
            let nf = *n as f64;
            let e = 1.0 + a - b;
            let lead = nf - p - p * a;
            let gamma = p * lead * e / ((p - 1.0) * (nf - e * p));
            let delta = (nf - p * e) / (p * e);
            let beta_exact = (|| {
                let (nr, pr, ar) = (families::int(*n as i64), exact(*p)?, exact(*a)?);
                Some((&nr - &pr - &pr * &ar) / (pr - families::int(1)))
            })();
            (
                Shape::Bubble {
                    scale: amplitude * lead.powf(delta),
                    offset: 1.0,
                    power: gamma,
                    exponent: delta,
                },
                Sign::Positive,
                DecayClass::Algebraic,
                lead / (p - 1.0),
                beta_exact,
            )
        }
        ProfileKind::HessianFast { n, k } => {
            EquationFamily::KHessian { n: *n, k: *k }.validate()?;
            let theta = (*n as f64 - 2.0 * *k as f64) / (2.0 * *k as f64);
            (
                Shape::Bubble {
                    scale: -hessian_fast_amplitude(*n, *k),
                    offset: 1.0,
                    power: 2.0,
                    exponent: theta,
                },
                Sign::Negative,
                DecayClass::Algebraic,
                2.0 * theta,
                Some(families::ratio(*n as i64 - 2 * *k as i64, *k as i64)),
            )
        }
        ProfileKind::HessianSlowPower { n, k, q } => {
            let fam = EquationFamily::KHessian { n: *n, k: *k }.validate()?;
            let qr = rat_param("q", *q)?;
            let serrin = families::serrin_exponent(&fam).expect("k-Hessian");
            if qr <= serrin {
                return Err(ProfileError::Parameter(format!(
                    "slow-decay power needs q above the Serrin exponent {}",
                    families::rational_string(&serrin)
                )));
            }
            let kr = families::int(*k as i64);
            let beta_exact = families::int(2) * &kr / (&qr - &kr);
            (
                Shape::Power {
                    coeff: -hessian_slow_amplitude(*n, *k, *q),
                    exponent: 2.0 * *k as f64 / (q - *k as f64),
                },
                Sign::Negative,
                DecayClass::SingularAtOrigin,
                to_f64(&beta_exact),
                Some(beta_exact),
            )
        }
        ProfileKind::HessianAnsatz {
            n,
            k,
            theta,
            amplitude,
        } => {
            EquationFamily::KHessian { n: *n, k: *k }.validate()?;
            positive("theta", *theta)?;
            positive("amplitude", *amplitude)?;
            (
                Shape::Bubble {
                    scale: -amplitude,
                    offset: 1.0,
                    power: 2.0,
                    exponent: *theta,
                },
                Sign::Negative,
                DecayClass::Algebraic,
                2.0 * theta,
                exact(*theta).map(|t| families::int(2) * t),
            )
        }
        ProfileKind::Constant { value } => (
            Shape::Constant(*value),
            if *value < 0.0 { Sign::Negative } else { Sign::Positive },
            DecayClass::Algebraic,
            0.0,
            Some(families::int(0)),
        ),
        ProfileKind::NumericGrid {
            grid,
            decay_class,
            decay_power,
            sign,
            ..
        } => (
            Shape::Grid(grid.clone()),
            *sign,
            *decay_class,
            decay_power.unwrap_or(f64::NAN),
            decay_power.and_then(exact),
        ),
    };
    Ok(RadialProfile {
        kind,
        shape,
        prefactor: 1.0,
        dilation: 1.0,
        sign,
        decay_class: class,
        decay_power: if beta.is_nan() { None } else { Some(beta) },
        decay_power_exact: beta_exact,
    })
}

/// `r ↦ μ^σ u(μ r)`.
pub fn scale_profile(u: &RadialProfile, mu: f64, sigma: f64) -> RadialProfile {
    let mut out = u.clone();
    out.prefactor *= mu.powf(sigma);
    out.dilation *= mu;
    out
}

/// Degree of homogeneity of the family's operator in `u`.
fn homogeneity(family: &EquationFamily) -> Option<(f64, OperatorKind, f64)> {
    // (degree h, operator, weight power w of r^{-w} on the right-hand side) without q
    match family {
        EquationFamily::LaneEmden { n } => Some((1.0, OperatorKind::Laplace { n: *n }, 0.0)),
        EquationFamily::HardySobolev { n, t } => {
            Some((1.0, OperatorKind::Laplace { n: *n }, to_f64(t)))
        }
        EquationFamily::Ckn { n, p, a, .. } => Some((
            to_f64(p) - 1.0,
            OperatorKind::WeightedPLaplace {
                n: *n,
                p: to_f64(p),
                a: to_f64(a),
            },
            f64::NAN,
        )),
        EquationFamily::KHessian { n, k } => {
            Some((*k as f64, OperatorKind::KHessianRadial { n: *n, k: *k }, 0.0))
        }
        _ => None,
    }
}

/// Amplitude `λ` making `λ · shape` satisfy the family's equation at `r_anchor`:
/// `λ = [Op(shape) / (weight · |shape|^q)]^{1/(q-h)}`, `h` the operator's degree.
pub fn fit_amplitude(
    shape: &RadialProfile,
    family: &EquationFamily,
    q: f64,
    r_anchor: f64,
) -> Result<f64, ProfileError> {
    let (h, op, w) = homogeneity(family).ok_or_else(|| {
        ProfileError::Fit(format!("{} has no homogeneous operator", family.name()))
    })?;
    if (q - h).abs() < 1e-14 {
        return Err(ProfileError::Fit("q equals the operator degree".into()));
    }
    let weight_power = match family {
        EquationFamily::Ckn { b, .. } => to_f64(b) * (q + 1.0),
        _ => w,
    };
    let lhs = radial_ops::apply(&op, shape, r_anchor)?;
    let u = shape.value(r_anchor).abs();
    let rhs = r_anchor.powf(-weight_power) * u.powf(q);
    if rhs == 0.0 || lhs == 0.0 || !rhs.is_finite() {
        return Err(ProfileError::Fit(format!("zero denominator at r = {r_anchor}")));
    }
    let ratio = lhs / rhs;
    if ratio <= 0.0 {
        return Err(ProfileError::Fit(format!(
            "operator and nonlinearity have opposite signs at r = {r_anchor}"
        )));
    }
    Ok(ratio.powf(1.0 / (q - h)))
}
