//! Radial shooting for the k-Hessian problem and the Schrödinger ground state.

use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::families::{self, to_f64, EquationFamily, ValidationError};
use crate::profiles::{
    explicit_profile, hessian_slow_amplitude, DecayClass, GridProfile, ProfileError, ProfileKind, RadialProfile,
    Shape, Sign,
};
use crate::radial_ops::{self, OpError};

#[derive(Debug, Error)]
pub enum ShootingError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("step size underflow at r = {0}")]
    StepUnderflow(f64),
    #[error("step budget exhausted at r = {0}")]
    StepBudget(f64),
    #[error("no sign change of f_A(1) + C_A for A in [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("root finder did not converge (gap {gap:e})")]
    NonConvergence { gap: f64 },
    #[error("decay window [{lo}, {hi}] is too small or the profile vanishes on it")]
    Window { lo: f64, hi: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Operator(#[from] OpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub h_min: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rel_tol: 1e-10,
            abs_tol: 1e-30,
            max_steps: 200_000,
            h_min: 1e-14,
        }
    }
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type State = [f64; 2];

#[derive(Debug, Clone, Copy)]
struct DenseStep {
    x0: f64,
    h: f64,
    // continuous extension coefficients
    r: [State; 5],
}

impl DenseStep {
    fn eval(&self, x: f64) -> State {
        let t = (x - self.x0) / self.h;
        let s = 1.0 - t;
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.r;
            *o = r[0][i] + t * (r[1][i] + s * (r[2][i] + t * (r[3][i] + s * r[4][i])));
        }
        out
    }
}

/// Piecewise dense output of an accepted integration.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    steps: Vec<DenseStep>,
    start: f64,
    end: f64,
}

impl DenseSolution {
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    fn eval(&self, x: f64) -> State {
        let i = self.steps.partition_point(|s| s.x0 + s.h < x).min(self.steps.len() - 1);
        self.steps[i].eval(x)
    }
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Integrates `y' = rhs(x, y)` from `x0` to `x1`; `event(x, y)` returning true stops the run.
fn dopri<F, E>(
    rhs: F,
    x0: f64,
    y0: State,
    x1: f64,
    h0: f64,
    ctl: &StepControl,
    event: E,
) -> Result<(DenseSolution, Option<f64>), ShootingError>
where
    F: Fn(f64, &State) -> State,
    E: Fn(f64, &State) -> bool,
{
    let mut x = x0;
    let mut y = y0;
    let mut k1 = rhs(x, &y);
    let mut h = h0.min(x1 - x0);
    let mut steps = Vec::new();
    let mut stop_at = None;
    let mut count = 0;
    while x < x1 {
        count += 1;
        if count > ctl.max_steps {
            return Err(ShootingError::StepBudget(x));
        }
        if h <= ctl.h_min * x.abs() {
            return Err(ShootingError::StepUnderflow(x));
        }
        let last = x + h >= x1;
        if last {
            h = x1 - x;
        }
        let k2 = rhs(x + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(x + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(x + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(
            x + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            x + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = rhs(x + h, &y1);
        let mut err = 0.0;
        let mut finite = true;
        for i in 0..2 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y1[i].abs());
            finite &= e.is_finite() && y1[i].is_finite();
            err += (e / sc) * (e / sc);
        }
        let err = (err / 2.0).sqrt();
        if !finite || err > 1.0 {
            let fac = if finite { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.25 };
            h *= fac;
            continue;
        }
        let mut rc = [[0.0; 2]; 5];
        for i in 0..2 {
            let ydiff = y1[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            rc[0][i] = y[i];
            rc[1][i] = ydiff;
            rc[2][i] = bspl;
            rc[3][i] = ydiff - h * k7[i] - bspl;
            rc[4][i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let step = DenseStep { x0: x, h, r: rc };
        steps.push(step);
        if event(x + h, &y1) {
            // bisect on the dense output for the crossing
            let (mut lo, mut hi) = (x, x + h);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if event(mid, &step.eval(mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            stop_at = Some(hi);
            x = hi;
            break;
        }
        x += h;
        y = y1;
        k1 = k7;
        if last {
            break;
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        h *= fac;
    }
    Ok((
        DenseSolution {
            steps,
            start: x0,
            end: x,
        },
        stop_at,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Reached,
    /// `f` reached zero at this radius.
    BlowThrough { radius: f64 },
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Reached => "reached",
            RunStatus::BlowThrough { .. } => "blow-through",
        }
    }
}

/// Dense k-Hessian trajectory: series on `[0, r0]`, integrated `(f, w)` beyond.
#[derive(Debug, Clone)]
pub struct HessianTrajectory {
    pub n: u32,
    pub k: u32,
    pub q: f64,
    pub a: f64,
    pub r0: f64,
    /// `f''(0)`.
    pub curvature: f64,
    /// `ε` of the startup series `f' = f''(0) r (1 - ε r²)`.
    pub startup_eps: f64,
    pub status: RunStatus,
    solution: DenseSolution,
}

impl HessianTrajectory {
    pub fn end(&self) -> f64 {
        self.solution.end()
    }

    /// `f(r)`.
    pub fn value(&self, r: f64) -> f64 {
        if r <= self.r0 {
            -self.a + 0.5 * self.curvature * r * r * (1.0 - 0.5 * self.startup_eps * r * r)
        } else {
            self.solution.eval(r.min(self.end()))[0]
        }
    }

    /// `f'(r) = (w r^{k-n})^{1/k}`.
    pub fn slope(&self, r: f64) -> f64 {
        if r <= self.r0 {
            self.curvature * r * (1.0 - self.startup_eps * r * r)
        } else {
            let v = self.solution.eval(r.min(self.end()))[1].max(0.0);
            r * v.powf(1.0 / self.k as f64)
        }
    }

    /// `w(r) = f'(r)^k r^{n-k}`.
    pub fn flux(&self, r: f64) -> f64 {
        if r <= self.r0 {
            self.slope(r).powi(self.k as i32) * r.powi(self.n as i32 - self.k as i32)
        } else {
            self.solution.eval(r.min(self.end()))[1] * r.powi(self.n as i32)
        }
    }

    /// `f''` by a central difference of the exact slope.
    pub fn curvature_at(&self, r: f64) -> f64 {
        let d = 1e-5 * r.max(self.r0);
        if r + d > self.end() {
            // second-order backward stencil at the end of the run
            return (3.0 * self.slope(r) - 4.0 * self.slope(r - d) + self.slope(r - 2.0 * d)) / (2.0 * d);
        }
        let lo = (r - d).max(0.0);
        (self.slope(r + d) - self.slope(lo)) / (r + d - lo)
    }

    /// `F_k[f](r) - (-f(r))^q` with `f''` from [`Self::curvature_at`].
    pub fn residual(&self, r: f64) -> f64 {
        let (c1, c2) = binomials(self.n, self.k);
        let g = self.slope(r) / r;
        let lhs = c1 * g.powi(self.k as i32 - 1) * self.curvature_at(r) + c2 * g.powi(self.k as i32);
        lhs - (-self.value(r)).max(0.0).powf(self.q)
    }
}

fn binomials(n: u32, k: u32) -> (f64, f64) {
    (
        to_f64(&families::binomial(n - 1, k - 1)),
        to_f64(&families::binomial(n - 1, k)),
    )
}

fn check_hessian(n: u32, k: u32, q: f64) -> Result<(), ShootingError> {
    let fam = EquationFamily::KHessian { n, k }.validate()?;
    let serrin = to_f64(&families::serrin_exponent(&fam).expect("k-Hessian"));
    if !(q > serrin) || !q.is_finite() {
        return Err(ShootingError::Precondition(format!(
            "q = {q} must exceed the Serrin exponent {serrin}"
        )));
    }
    Ok(())
}

/// `ε` in `f'(r)/r = f''(0)(1 - ε r² + O(r⁴))`.
fn startup_correction(n: u32, k: u32, q: f64, a: f64, curvature: f64) -> f64 {
    let nf = n as f64;
    nf * q * curvature / (2.0 * k as f64 * a * (nf + 2.0))
}

/// Integrates the radial k-Hessian problem with `f(0) = -A`, `f'(0) = 0` up to `r_max`.
pub fn khessian_integrate(
    n: u32,
    k: u32,
    q: f64,
    a: f64,
    r_max: f64,
    ctl: &StepControl,
) -> Result<HessianTrajectory, ShootingError> {
    check_hessian(n, k, q)?;
    if !(a > 0.0) || !(r_max > 0.0) {
        return Err(ShootingError::Precondition("A and r_max must be positive".into()));
    }
    let (c1, _) = binomials(n, k);
    let (nf, kf) = (n as f64, k as f64);
    let curvature = (kf * a.powf(q) / (nf * c1)).powf(1.0 / kf);
    // keep the dropped r⁴ term of the series below the step tolerance
    let r0 = if curvature > 0.0 {
        (1e-3f64).min((1e-6 * a / curvature).sqrt()).min(0.5 * r_max)
    } else {
        1e-3f64.min(0.5 * r_max)
    };
    let eps = startup_correction(n, k, q, a, curvature);
    let slope0 = curvature * r0 * (1.0 - eps * r0 * r0);
    let y0 = [
        -a + 0.5 * curvature * r0 * r0 * (1.0 - 0.5 * eps * r0 * r0),
        (slope0 / r0).powf(kf),
    ];
    let lead = kf / c1;
    // second component v = w r^{-n}: w' = lead r^{n-1}(-f)^q becomes v' = (lead (-f)^q - n v)/r
    let rhs = |r: f64, y: &State| -> State {
        let v = y[1].max(0.0);
        let fp = r * v.powf(1.0 / kf);
        [fp, (lead * (-y[0]).max(0.0).powf(q) - nf * v) / r]
    };
    let (solution, stop) = dopri(rhs, r0, y0, r_max, r0, ctl, |_, y| y[0] >= 0.0)?;
    let status = match stop {
        Some(radius) => RunStatus::BlowThrough { radius },
        None => RunStatus::Reached,
    };
    Ok(HessianTrajectory {
        n,
        k,
        q,
        a,
        r0,
        curvature,
        startup_eps: eps,
        status,
        solution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub r: f64,
    pub f: f64,
    pub fp: f64,
    pub residual: f64,
}

/// Result of matching `f_A(1) = -C_A` and gluing the tail `-C_A r^{-2k/(q-k)}` for `r >= 1`.
#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub n: u32,
    pub k: u32,
    pub q: f64,
    pub a: f64,
    pub target: f64,
    pub trajectory: Vec<TrajectorySample>,
    pub matched: bool,
    pub target_gap: f64,
    /// Log-log slope of the glued profile on `[10, 10³]`.
    pub decay_estimate: f64,
    /// Log-log slope of the unglued ODE continuation on `[10, 10³]`.
    pub free_decay_estimate: Option<f64>,
    /// Interior residual on `[r0, 1]` against the radial operator.
    pub residual_max: f64,
    pub tail_residual_max: f64,
    pub glue_derivative_jump: f64,
    pub monotone_on_scan: bool,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub profile: RadialProfile,
    pub run: HessianTrajectory,
}

impl ShootingResult {
    pub fn to_json(&self) -> Value {
        json!({
            "problem": "khessian",
            "n": self.n,
            "k": self.k,
            "q": self.q,
            "A": self.a,
            "C_A": self.target,
            "matched": self.matched,
            "target_gap": self.target_gap,
            "decay_estimate": self.decay_estimate,
            "free_decay_estimate": self.free_decay_estimate,
            "residual_max": self.residual_max,
            "tail_residual_max": self.tail_residual_max,
            "glue_derivative_jump": self.glue_derivative_jump,
            "monotone_on_scan": self.monotone_on_scan,
            "bracket": [self.bracket.0, self.bracket.1],
            "evaluations": self.evaluations,
            "samples": self.trajectory.len(),
        })
    }

    /// CSV `r,f,fp,residual`.
    pub fn trajectory_csv(&self) -> String {
        samples_csv(&self.trajectory)
    }
}

pub fn samples_csv(samples: &[TrajectorySample]) -> String {
    let mut out = String::from("r,f,fp,residual\n");
    for s in samples {
        writeln!(out, "{:.15e},{:.15e},{:.15e},{:.6e}", s.r, s.f, s.fp, s.residual).expect("string write");
    }
    out
}

const SCAN_POINTS: usize = 64;

/// Shoots on `A` so that `f_A(1) = -C_A` within `tol`, then glues the slow-decay tail.
pub fn khessian_shoot_match(n: u32, k: u32, q: f64, tol: f64) -> Result<ShootingResult, ShootingError> {
    check_hessian(n, k, q)?;
    let ctl = StepControl::default();
    let target = hessian_slow_amplitude(n, k, q);
    let gap = |a: f64| -> Result<f64, ShootingError> {
        let run = khessian_integrate(n, k, q, a, 1.0, &ctl)?;
        Ok(match run.status {
            RunStatus::Reached => run.value(1.0) + target,
            // f already crossed zero, so f(1) lies above -C_A
            RunStatus::BlowThrough { .. } => f64::INFINITY,
        })
    };
    let (lo, hi) = (1e-3 * target, 1e3 * target);
    let ratio = (hi / lo).powf(1.0 / (SCAN_POINTS - 1) as f64);
    let mut evaluations = 0;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    let mut monotone = true;
    for i in 0..SCAN_POINTS {
        let a = lo * ratio.powi(i as i32);
        let g = gap(a)?;
        evaluations += 1;
        if let Some((pa, pg)) = prev {
            // f_A(1) decreasing in A means the gap decreases
            if g > pg {
                monotone = false;
            }
            if pg.signum() != g.signum() || g == 0.0 {
                bracket = Some((pa, pg, a, g));
                break;
            }
        }
        prev = Some((a, g));
    }
    let (mut a0, mut g0, mut a1, mut g1) = bracket.ok_or(ShootingError::NoBracket { lo, hi })?;
    let scan_bracket = (a0, a1);
    // Illinois false position, falling back to bisection when it stalls
    let mut side = 0i8;
    let mut best = if g0.abs() < g1.abs() { (a0, g0) } else { (a1, g1) };
    for _ in 0..200 {
        if best.1.abs() < tol || (a1 - a0).abs() <= 4.0 * f64::EPSILON * a1 {
            break;
        }
        let mut a = if g0.is_finite() && g1.is_finite() {
            a1 - g1 * (a1 - a0) / (g1 - g0)
        } else {
            0.5 * (a0 + a1)
        };
        if !(a > a0.min(a1) && a < a0.max(a1)) {
            a = 0.5 * (a0 + a1);
        }
        let g = gap(a)?;
        evaluations += 1;
        if g.abs() < best.1.abs() {
            best = (a, g);
        }
        if g.signum() == g1.signum() {
            a1 = a;
            g1 = g;
            if side == 1 {
                g0 *= 0.5;
            }
            side = 1;
        } else {
            a0 = a;
            g0 = g;
            if side == -1 {
                g1 *= 0.5;
            }
            side = -1;
        }
    }
    let (a, g) = best;
    let matched = g.abs() < tol;
    if !matched && !g.is_finite() {
        return Err(ShootingError::NonConvergence { gap: g });
    }
    let run = khessian_integrate(n, k, q, a, 1.0, &ctl)?;
    let kf = k as f64;
    let beta = 2.0 * kf / (q - kf);

    // samples on [r0, 1]: log-spaced near the origin, uniform beyond
    let mut radii: Vec<f64> = Vec::new();
    let m_log = 200;
    let (l0, l1) = (run.r0.ln(), 0.1f64.ln());
    for i in 0..m_log {
        radii.push((l0 + (l1 - l0) * i as f64 / m_log as f64).exp());
    }
    let m_lin = 1000;
    for i in 0..=m_lin {
        radii.push(0.1 + 0.9 * i as f64 / m_lin as f64);
    }
    let mut f = Vec::with_capacity(radii.len() + 1);
    let mut fp = Vec::with_capacity(radii.len() + 1);
    let mut fpp = Vec::with_capacity(radii.len() + 1);
    let mut grid_r = vec![0.0];
    f.push(-a);
    fp.push(0.0);
    fpp.push(run.curvature);
    for &r in &radii {
        grid_r.push(r);
        f.push(run.value(r));
        fp.push(run.slope(r));
        fpp.push(run.curvature_at(r));
    }
    let tail = Shape::Power {
        coeff: -target,
        exponent: beta,
    };
    let grid = GridProfile::new(grid_r.clone(), f.clone(), fp.clone(), fpp, Some(tail))?;
    let profile = explicit_profile(ProfileKind::NumericGrid {
        label: "khessian-glued",
        grid: Arc::new(grid),
        decay_class: DecayClass::Algebraic,
        decay_power: Some(beta),
        sign: Sign::Negative,
    })?;
    let fam = EquationFamily::KHessian { n, k };
    let mut trajectory = Vec::with_capacity(grid_r.len());
    let mut residual_max: f64 = 0.0;
    for (i, &r) in grid_r.iter().enumerate() {
        let res = if r >= run.r0 {
            let res = radial_ops::residual(&fam, q, &profile, r)?;
            residual_max = residual_max.max(res.abs());
            res
        } else {
            radial_ops::residual(&fam, q, &profile, r).unwrap_or(f64::NAN)
        };
        trajectory.push(TrajectorySample {
            r,
            f: f[i],
            fp: fp[i],
            residual: res,
        });
    }
    let mut tail_residual_max: f64 = 0.0;
    for i in 1..=200 {
        let r = 10f64.powf(6.0 * i as f64 / 200.0);
        tail_residual_max = tail_residual_max.max(radial_ops::residual(&fam, q, &profile, r)?.abs());
    }
    let glue_derivative_jump = (run.slope(1.0) - target * beta).abs();
    let decay_estimate = decay_rate_estimate(&profile, (10.0, 1e3))?;
    let free_decay_estimate = khessian_integrate(n, k, q, a, 1e3, &ctl)
        .ok()
        .filter(|r| r.status == RunStatus::Reached)
        .and_then(|r| trajectory_decay_rate(&r, (10.0, 1e3)).ok());
    Ok(ShootingResult {
        n,
        k,
        q,
        a,
        target,
        trajectory,
        matched,
        target_gap: g.abs(),
        decay_estimate,
        free_decay_estimate,
        residual_max,
        tail_residual_max,
        glue_derivative_jump,
        monotone_on_scan: monotone,
        bracket: scan_bracket,
        evaluations,
        profile,
        run,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

const DECAY_POINTS: usize = 129;

fn decay_points(window: (f64, f64), value: impl Fn(f64) -> f64, exponential: bool) -> Result<f64, ShootingError> {
    let (lo, hi) = window;
    let err = ShootingError::Window { lo, hi };
    if !(lo > 0.0 && hi > lo * (1.0 + 1e-9)) {
        return Err(err);
    }
    let mut pts = Vec::with_capacity(DECAY_POINTS);
    for i in 0..DECAY_POINTS {
        let t = i as f64 / (DECAY_POINTS - 1) as f64;
        let r = if exponential {
            lo + (hi - lo) * t
        } else {
            (lo.ln() + (hi.ln() - lo.ln()) * t).exp()
        };
        let v = value(r).abs();
        if !(v > 0.0) || !v.is_finite() {
            return Err(err);
        }
        pts.push((if exponential { r } else { r.ln() }, v.ln()));
    }
    Ok(-least_squares_slope(&pts))
}

/// Least-squares decay rate: slope of `-log|u|` against `log r` (algebraic) or `r` (exponential).
pub fn decay_rate_estimate(profile: &RadialProfile, window: (f64, f64)) -> Result<f64, ShootingError> {
    let exponential = profile.decay_class() == DecayClass::Exponential;
    decay_points(window, |r| profile.value(r), exponential)
}

/// As [`decay_rate_estimate`] on a raw k-Hessian trajectory.
pub fn trajectory_decay_rate(run: &HessianTrajectory, window: (f64, f64)) -> Result<f64, ShootingError> {
    if window.1 > run.end() {
        return Err(ShootingError::Window {
            lo: window.0,
            hi: window.1,
        });
    }
    decay_points(window, |r| run.value(r), false)
}

/// Positive radial ground state of `-Δu + u = u^q`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub n: u32,
    pub q: f64,
    pub u0: f64,
    pub matching_radius: f64,
    pub profile: RadialProfile,
    pub bisection_steps: usize,
}

impl GroundState {
    pub fn to_json(&self) -> Value {
        json!({
            "problem": "schrodinger",
            "n": self.n,
            "q": self.q,
            "u0": self.u0,
            "matching_radius": self.matching_radius,
            "bisection_steps": self.bisection_steps,
        })
    }

    /// CSV `r,f,fp,residual` on `points` radii in `[0, r_max]`.
    pub fn trajectory_csv(&self, r_max: f64, points: usize) -> String {
        let fam = EquationFamily::BesselSingle {
            n: self.n,
            alpha: families::int(2),
        };
        let samples: Vec<TrajectorySample> = (0..points.max(2))
            .map(|i| {
                let r = r_max * i as f64 / (points.max(2) - 1) as f64;
                TrajectorySample {
                    r,
                    f: self.profile.value(r),
                    fp: self.profile.deriv(r),
                    residual: radial_ops::residual(&fam, self.q, &self.profile, r).unwrap_or(f64::NAN),
                }
            })
            .collect();
        samples_csv(&samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    /// `u` crossed zero.
    Over,
    /// `u'` turned positive while `u > 0`.
    Under,
    Undecided,
}

fn schrodinger_shot(n: u32, q: f64, u0: f64, r_max: f64, ctl: &StepControl) -> Result<(Shot, DenseSolution, f64), ShootingError> {
    let nf = n as f64;
    let c = (u0 - u0.powf(q)) / nf;
    let r0 = 1e-3;
    let y0 = [u0 + 0.5 * c * r0 * r0, c * r0];
    let rhs = |r: f64, y: &State| -> State {
        let u = y[0];
        [y[1], -(nf - 1.0) * y[1] / r + u - u.abs().powf(q - 1.0) * u]
    };
    let (sol, stop) = dopri(rhs, r0, y0, r_max, r0, ctl, |_, y| y[0] <= 0.0 || y[1] > 0.0)?;
    let shot = match stop {
        Some(x) => {
            if sol.eval(x)[0] <= 0.0 {
                Shot::Over
            } else {
                Shot::Under
            }
        }
        None => Shot::Undecided,
    };
    Ok((shot, sol, c))
}

/// Bisects on `u(0)` between overshoot (`u` crosses zero) and undershoot (`u` turns up).
pub fn schrodinger_ground_state(n: u32, q: f64, tol: f64) -> Result<GroundState, ShootingError> {
    if n < 3 {
        return Err(ShootingError::Precondition("n must be at least 3".into()));
    }
    let crit = (n as f64 + 2.0) / (n as f64 - 2.0);
    if !(q > 1.0 && q < crit) {
        return Err(ShootingError::Precondition(format!(
            "q = {q} must lie in (1, {crit}) for a finite-energy ground state"
        )));
    }
    let ctl = StepControl {
        rel_tol: 1e-12,
        abs_tol: 1e-16,
        ..StepControl::default()
    };
    let r_max = 60.0;
    // u0 below 1 undershoots immediately since u - u^q > 0 makes u'' > 0 at the origin
    let mut lo = 1.0 + 1e-9;
    let mut hi = 2.0;
    while schrodinger_shot(n, q, hi, r_max, &ctl)?.0 != Shot::Over {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(ShootingError::NonConvergence { gap: hi });
        }
    }
    let mut steps = 0;
    while (hi - lo) > tol.max(4.0 * f64::EPSILON) * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match schrodinger_shot(n, q, mid, r_max, &ctl)?.0 {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
            Shot::Undecided => break,
        }
        steps += 1;
        if steps > 400 {
            return Err(ShootingError::NonConvergence { gap: hi - lo });
        }
    }
    let u0 = 0.5 * (lo + hi);
    let (_, sol, c) = schrodinger_shot(n, q, lo, r_max, &ctl)?;
    // match the exponential tail once u has dropped well below its peak
    let threshold = 1e-4 * u0;
    let mut r_match = sol.start();
    let probe = 4000;
    let end = sol.end();
    for i in 0..=probe {
        let r = sol.start() + (end - sol.start()) * i as f64 / probe as f64;
        let y = sol.eval(r);
        if y[0] <= threshold || y[1] > 0.0 {
            break;
        }
        r_match = r;
    }
    if r_match <= sol.start() + 1.0 {
        return Err(ShootingError::NonConvergence { gap: hi - lo });
    }
    let nf = n as f64;
    let mut rs = vec![0.0];
    let mut f = vec![u0];
    let mut fp = vec![0.0];
    let mut fpp = vec![(u0 - u0.powf(q)) / nf];
    let m = 4000;
    for i in 1..=m {
        let r = r_match * i as f64 / m as f64;
        let (u, du) = if r <= sol.start() {
            (u0 + 0.5 * c * r * r, c * r)
        } else {
            let y = sol.eval(r);
            (y[0], y[1])
        };
        rs.push(r);
        f.push(u);
        fp.push(du);
        fpp.push(-(nf - 1.0) * du / r + u - u.abs().powf(q - 1.0) * u);
    }
    let unit = Shape::Yukawa { coeff: 1.0, n };
    let coeff = f[m] / unit.eval(r_match, 0);
    let grid = GridProfile::new(rs, f, fp, fpp, Some(Shape::Yukawa { coeff, n }))?;
    let profile = explicit_profile(ProfileKind::NumericGrid {
        label: "schrodinger-ground-state",
        grid: Arc::new(grid),
        decay_class: DecayClass::Exponential,
        decay_power: None,
        sign: Sign::Positive,
    })?;
    Ok(GroundState {
        n,
        q,
        u0,
        matching_radius: r_match,
        profile,
        bisection_steps: steps,
    })
}
