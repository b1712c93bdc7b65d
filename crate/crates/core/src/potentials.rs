//! Riesz and Bessel potentials of radial functions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::profiles::RadialProfile;
use crate::quadrature::{
    integrate_half_line, integrate_interval, sphere_area, QuadratureError, QuadratureResult, QuadratureSpec,
    TailClass,
};

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("alpha = {alpha} outside the supported range {range}")]
    UnsupportedRange { alpha: f64, range: &'static str },
    #[error("radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("quadrature did not reach tolerance (value {value:e}, error estimate {error:e})")]
    NotConverged { value: f64, error: f64 },
}

fn accept(res: QuadratureResult) -> Result<f64, PotentialError> {
    if res.converged {
        Ok(res.value)
    } else {
        Err(PotentialError::NotConverged {
            value: res.value,
            error: res.error_estimate,
        })
    }
}

fn inner_spec() -> QuadratureSpec {
    QuadratureSpec::default()
        .with_rel_tol(1e-12)
        .with_abs_tol(1e-300)
        .with_max_nodes(4_000)
}

/// Bessel kernel `g_α(r) = c_α ∫_0^∞ (4πt)^{(α-n)/2} e^{-r²/(4t) - t} dt/t`, unit mass.
#[derive(Debug)]
pub struct BesselKernel {
    n: u32,
    alpha: f64,
    c_alpha: f64,
    table: OnceLock<SplineTable>,
}

#[derive(Debug)]
struct SplineTable {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl SplineTable {
    fn build(x0: f64, x1: f64, y: Vec<f64>) -> SplineTable {
        let len = y.len();
        let h = (x1 - x0) / (len - 1) as f64;
        // natural cubic spline, uniform grid
        let mut m = vec![0.0; len];
        let mut c = vec![0.0; len];
        let mut d = vec![0.0; len];
        for i in 1..len - 1 {
            let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
            let denom = 4.0 - c[i - 1];
            c[i] = 1.0 / denom;
            d[i] = (rhs - d[i - 1]) / denom;
        }
        for i in (1..len - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        SplineTable { x0, h, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.x0) / self.h;
        let i = (pos.floor() as usize).min(self.y.len() - 2);
        let t = pos - i as f64;
        let u = 1.0 - t;
        let h2 = self.h * self.h;
        u * self.y[i]
            + t * self.y[i + 1]
            + h2 / 6.0 * ((u * u * u - u) * self.m[i] + (t * t * t - t) * self.m[i + 1])
    }
}

const TABLE_POINTS: usize = 4096;
const TABLE_MIN: f64 = 1e-8;
/// Beyond this radius `g_α` is below `e^{-700}` and treated as underflow.
pub const BESSEL_UNDERFLOW_RADIUS: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub underflow: bool,
}

impl BesselKernel {
    pub fn new(n: u32, alpha: f64) -> Result<BesselKernel, PotentialError> {
        if !(alpha > 0.0 && alpha <= n as f64) || n < 1 {
            return Err(PotentialError::UnsupportedRange {
                alpha,
                range: "(0, n]",
            });
        }
        // ∫_{R^n} (4πt)^{(α-n)/2} e^{-|x|²/4t} dx = (4πt)^{α/2}, so the mass is (4π)^{α/2} Γ(α/2)
        let spec = QuadratureSpec::default().with_rel_tol(1e-13).with_tail(TailClass::Exponential);
        let a = alpha / 2.0;
        let gamma = accept(integrate_half_line(&|t: f64| t.powf(a - 1.0) * (-t).exp(), &[], &spec)?)?;
        let c_alpha = 1.0 / ((4.0 * PI).powf(a) * gamma);
        Ok(BesselKernel {
            n,
            alpha,
            c_alpha,
            table: OnceLock::new(),
        })
    }

    /// Process-wide shared kernel for `(n, α)`.
    pub fn shared(n: u32, alpha: f64) -> Result<Arc<BesselKernel>, PotentialError> {
        static CACHE: OnceLock<Mutex<HashMap<(u32, u64), Arc<BesselKernel>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (n, alpha.to_bits());
        if let Some(k) = cache.lock().expect("kernel cache").get(&key) {
            return Ok(k.clone());
        }
        let kernel = Arc::new(BesselKernel::new(n, alpha)?);
        Ok(cache
            .lock()
            .expect("kernel cache")
            .entry(key)
            .or_insert(kernel)
            .clone())
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn normalization(&self) -> f64 {
        self.c_alpha
    }

    /// Direct quadrature of the defining t-integral, `t = e^x`.
    pub fn value(&self, r: f64) -> Result<KernelValue, PotentialError> {
        if r < 0.0 {
            return Err(PotentialError::NegativeRadius(r));
        }
        if r > BESSEL_UNDERFLOW_RADIUS {
            return Ok(KernelValue {
                value: 0.0,
                underflow: true,
            });
        }
        let e = (self.alpha - self.n as f64) / 2.0;
        let pref = self.c_alpha * (4.0 * PI).powf(e);
        let q = r * r / 4.0;
        let integrand = |x: f64| {
            let ex = x.exp();
            let arg = e * x - q / ex - ex;
            if arg < -745.0 {
                0.0
            } else {
                arg.exp()
            }
        };
        // stationary point of the exponent: e + q e^{-x} - e^x = 0
        let peak = ((e + (e * e + 4.0 * q).sqrt()) / 2.0).max(1e-300).ln();
        let hi = 800f64.ln().max(peak + 2.0);
        let lo = if q > 0.0 { (q / 800.0).ln() } else { -40.0 / (-e).max(1e-3) };
        let lo = lo.min(peak - 2.0);
        let spec = inner_spec().with_max_nodes(20_000);
        let mut total = 0.0;
        let cuts = [lo, peak - 1.0, peak, peak + 1.0, hi];
        for w in cuts.windows(2) {
            total += accept(integrate_interval(integrand, w[0], w[1], &spec)?)?;
        }
        Ok(KernelValue {
            value: pref * total,
            underflow: false,
        })
    }

    fn table(&self) -> &SplineTable {
        self.table.get_or_init(|| {
            let (x0, x1) = (TABLE_MIN.ln(), BESSEL_UNDERFLOW_RADIUS.ln());
            let shift = self.n as f64 - self.alpha;
            let y: Vec<f64> = (0..TABLE_POINTS)
                .into_par_iter()
                .map(|i| {
                    let x = x0 + (x1 - x0) * i as f64 / (TABLE_POINTS - 1) as f64;
                    let rho = x.exp();
                    let g = self.value(rho).map(|v| v.value).unwrap_or(0.0);
                    g.max(f64::MIN_POSITIVE).ln() + shift * x
                })
                .collect();
            SplineTable::build(x0, x1, y)
        })
    }

    /// Spline interpolation of `ln(g ρ^{n-α})` on a log grid; falls back to direct quadrature
    /// below the table and for `α = n`.
    pub fn interpolated(&self, r: f64) -> f64 {
        if r > BESSEL_UNDERFLOW_RADIUS {
            return 0.0;
        }
        if r < TABLE_MIN || self.alpha >= self.n as f64 {
            return self.value(r).map(|v| v.value).unwrap_or(f64::NAN);
        }
        let x = r.ln();
        (self.table().eval(x) - (self.n as f64 - self.alpha) * x).exp()
    }

    /// Writes the kernel on a log grid as CSV `r,g`.
    pub fn export_csv(&self, r_min: f64, r_max: f64, points: usize) -> Result<String, PotentialError> {
        let mut out = String::from("r,g\n");
        for r in log_grid(r_min, r_max, points) {
            let v = self.value(r)?;
            writeln!(out, "{r:.12e},{:.12e}", v.value).expect("string write");
        }
        Ok(out)
    }
}

/// `g_α(r)` by direct quadrature.
pub fn bessel_kernel_value(n: u32, alpha: f64, r: f64) -> Result<KernelValue, PotentialError> {
    BesselKernel::shared(n, alpha)?.value(r)
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let m = points.max(2);
    (0..m).map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone)]
pub enum RadialKernel {
    /// `ρ^{α-n}`.
    Riesz { alpha: f64 },
    Bessel(Arc<BesselKernel>),
}

impl RadialKernel {
    fn eval(&self, n: u32, rho: f64) -> f64 {
        match self {
            RadialKernel::Riesz { alpha } => rho.powf(alpha - n as f64),
            RadialKernel::Bessel(k) => k.interpolated(rho),
        }
    }

    fn alpha(&self) -> f64 {
        match self {
            RadialKernel::Riesz { alpha } => *alpha,
            RadialKernel::Bessel(k) => k.alpha,
        }
    }
}

/// Interpolation table of `A(r,s)` on a square log grid.
#[derive(Debug, Clone)]
pub struct KernelCache {
    lr0: f64,
    dl: f64,
    size: usize,
    values: Vec<f64>,
}

/// Exact quadrature is used within this many cells of the diagonal.
const DIAGONAL_CELLS: f64 = 3.0;

impl KernelCache {
    fn lookup(&self, r: f64, s: f64) -> Option<f64> {
        if r <= 0.0 || s <= 0.0 {
            return None;
        }
        let (pr, ps) = ((r.ln() - self.lr0) / self.dl, (s.ln() - self.lr0) / self.dl);
        let top = (self.size - 1) as f64;
        if !(0.0..top).contains(&pr) || !(0.0..top).contains(&ps) || (pr - ps).abs() < DIAGONAL_CELLS {
            return None;
        }
        let (i, j) = (pr as usize, ps as usize);
        let (ti, tj) = (pr - i as f64, ps - j as f64);
        let at = |a: usize, b: usize| self.values[a * self.size + b];
        Some(
            (1.0 - ti) * (1.0 - tj) * at(i, j)
                + ti * (1.0 - tj) * at(i + 1, j)
                + (1.0 - ti) * tj * at(i, j + 1)
                + ti * tj * at(i + 1, j + 1),
        )
    }
}

/// Angular reduction `A(r,s) = |S^{n-2}| ∫_0^π k(|x-y|) sin^{n-2}φ dφ` of a radial kernel.
#[derive(Debug, Clone)]
pub struct AngularKernel {
    n: u32,
    kernel: RadialKernel,
    cache: Option<Arc<KernelCache>>,
}

impl AngularKernel {
    /// Riesz kernel `|x-y|^{α-n}`; requires `1 < α < n`.
    pub fn riesz(n: u32, alpha: f64) -> Result<AngularKernel, PotentialError> {
        if !(alpha > 1.0 && alpha < n as f64) {
            return Err(PotentialError::UnsupportedRange {
                alpha,
                range: "(1, n)",
            });
        }
        Ok(AngularKernel {
            n,
            kernel: RadialKernel::Riesz { alpha },
            cache: None,
        })
    }

    /// Bessel kernel `g_α(|x-y|)`; requires `0 < α < n`.
    pub fn bessel(n: u32, alpha: f64) -> Result<AngularKernel, PotentialError> {
        if !(alpha > 0.0 && alpha < n as f64) {
            return Err(PotentialError::UnsupportedRange {
                alpha,
                range: "(0, n)",
            });
        }
        Ok(AngularKernel {
            n,
            kernel: RadialKernel::Bessel(BesselKernel::shared(n, alpha)?),
            cache: None,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Exponent `α - n` of the kernel's singularity.
    pub fn order(&self) -> f64 {
        self.kernel.alpha() - self.n as f64
    }

    /// Builds the `size × size` interpolation table over `[r_min, r_max]²` before sharing.
    pub fn with_cache(mut self, r_min: f64, r_max: f64, size: usize) -> Result<AngularKernel, PotentialError> {
        let size = size.max(4);
        let grid = log_grid(r_min, r_max, size);
        let rows: Result<Vec<Vec<f64>>, PotentialError> = grid
            .par_iter()
            .map(|&r| grid.iter().map(|&s| self.direct(r, s)).collect())
            .collect();
        let values = rows?.into_iter().flatten().collect();
        self.cache = Some(Arc::new(KernelCache {
            lr0: r_min.ln(),
            dl: (r_max.ln() - r_min.ln()) / (size - 1) as f64,
            size,
            values,
        }));
        Ok(self)
    }

    pub fn without_cache(mut self) -> AngularKernel {
        self.cache = None;
        self
    }

    /// `A(r, s)`, from the cache when one is present and the point is off-diagonal.
    pub fn value(&self, r: f64, s: f64) -> Result<f64, PotentialError> {
        if let Some(v) = self.cache.as_ref().and_then(|c| c.lookup(r, s)) {
            return Ok(v);
        }
        self.direct(r, s)
    }

    /// `A(r, s)` by adaptive quadrature in `φ`.
    pub fn direct(&self, r: f64, s: f64) -> Result<f64, PotentialError> {
        if r < 0.0 || s < 0.0 {
            return Err(PotentialError::NegativeRadius(r.min(s)));
        }
        let n = self.n;
        if r == 0.0 || s == 0.0 {
            return Ok(sphere_area(n) * self.kernel.eval(n, r.max(s)));
        }
        let sin_pow = n as f64 - 2.0;
        let diff2 = (r - s) * (r - s);
        let rs4 = 4.0 * r * s;
        let integrand = |phi: f64| {
            let h = (0.5 * phi).sin();
            let rho = (diff2 + rs4 * h * h).sqrt();
            if rho == 0.0 {
                return 0.0;
            }
            self.kernel.eval(n, rho) * phi.sin().powf(sin_pow)
        };
        // near r = s the integrand peaks at φ ~ |r-s|/√(rs); resolve with φ = φ_b y²
        let phi_b = (4.0 * (r - s).abs() / (r * s).sqrt()).min(PI / 2.0);
        let phi_b = if phi_b > 0.0 { phi_b } else { PI / 2.0 };
        let spec = inner_spec();
        let near = accept(integrate_interval(
            |y: f64| 2.0 * phi_b * y * integrand(phi_b * y * y),
            0.0,
            1.0,
            &spec,
        )?)?;
        // the φ/ρ transition decays algebraically past φ_b, so integrate in log φ
        let far = accept(integrate_interval(
            |t: f64| {
                let phi = t.exp();
                phi * integrand(phi)
            },
            phi_b.ln(),
            PI.ln(),
            &spec,
        )?)?;
        Ok(sphere_area(n - 1) * (near + far))
    }

    /// `∫_0^∞ f(s) s^{n-1} A(r,s) ds`, split at `s = r` and at `breaks`.
    pub fn convolve(
        &self,
        f: &dyn Fn(f64) -> f64,
        breaks: &[f64],
        r: f64,
        spec: &QuadratureSpec,
    ) -> Result<f64, PotentialError> {
        if r < 0.0 {
            return Err(PotentialError::NegativeRadius(r));
        }
        let failure: Mutex<Option<PotentialError>> = Mutex::new(None);
        let pw = self.n as f64 - 1.0;
        let g = |s: f64| -> f64 {
            let fs = f(s);
            if fs == 0.0 {
                return 0.0;
            }
            match self.value(r, s) {
                Ok(a) => fs * s.powf(pw) * a,
                Err(e) => {
                    failure.lock().expect("failure slot").get_or_insert(e);
                    0.0
                }
            }
        };
        let mut cuts: Vec<f64> = breaks.to_vec();
        if r > 0.0 {
            cuts.push(r);
        }
        let res = integrate_half_line(&g, &cuts, spec)?;
        if let Some(e) = failure.into_inner().expect("failure slot") {
            return Err(e);
        }
        accept(res)
    }

    /// Writes the cache as CSV `r,s,A`; computes a fresh `points × points` grid when none is held.
    pub fn export_csv(&self, r_min: f64, r_max: f64, points: usize) -> Result<String, PotentialError> {
        let mut out = String::from("r,s,A\n");
        let grid = log_grid(r_min, r_max, points);
        for &r in &grid {
            for &s in &grid {
                writeln!(out, "{r:.12e},{s:.12e},{:.12e}", self.value(r, s)?).expect("string write");
            }
        }
        Ok(out)
    }
}

fn convolution_spec() -> QuadratureSpec {
    QuadratureSpec::default().with_rel_tol(1e-10).with_abs_tol(1e-300).with_max_nodes(40_000)
}

/// `∫_{R^n} |x-y|^{α-n} f(|y|) dy` at `|x| = r`, for `1 < α < n`.
pub fn riesz_convolve_radial(
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    n: u32,
    alpha: f64,
    r: f64,
) -> Result<f64, PotentialError> {
    AngularKernel::riesz(n, alpha)?.convolve(f, breaks, r, &convolution_spec())
}

/// `∫_{R^n} g_α(x-y) f(|y|) dy` at `|x| = r`, for `0 < α < n`.
pub fn bessel_convolve_radial(
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    n: u32,
    alpha: f64,
    r: f64,
) -> Result<f64, PotentialError> {
    AngularKernel::bessel(n, alpha)?.convolve(f, breaks, r, &convolution_spec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralEquation {
    Riesz,
    Bessel,
}

/// `u(r) - (K u^q)(r)` for the Riesz or Bessel kernel of order `α`.
pub fn integral_residual(
    eq: IntegralEquation,
    u: &RadialProfile,
    q: f64,
    n: u32,
    alpha: f64,
    r: f64,
) -> Result<f64, PotentialError> {
    let f = |s: f64| u.value(s).abs().powf(q);
    let k = match eq {
        IntegralEquation::Riesz => riesz_convolve_radial(&f, &[], n, alpha, r)?,
        IntegralEquation::Bessel => bessel_convolve_radial(&f, &[], n, alpha, r)?,
    };
    Ok(u.value(r) - k)
}

/// `ĝ_α(ξ)` at `|ξ| = rho` with the `e^{-2πi x·ξ}` convention, by nested radial and angular quadrature.
pub fn bessel_fourier_transform(n: u32, alpha: f64, rho: f64) -> Result<f64, PotentialError> {
    let kernel = BesselKernel::shared(n, alpha)?;
    let sin_pow = n as f64 - 2.0;
    let area = sphere_area(n - 1);
    let angular = |r: f64| -> f64 {
        let w = 2.0 * PI * r * rho;
        if w == 0.0 {
            return sphere_area(n);
        }
        integrate_interval(|phi: f64| (w * phi.cos()).cos() * phi.sin().powf(sin_pow), 0.0, PI, &inner_spec())
            .map(|res| area * res.value)
            .unwrap_or(f64::NAN)
    };
    let failure: Mutex<Option<PotentialError>> = Mutex::new(None);
    let g = |r: f64| -> f64 {
        match kernel.value(r) {
            Ok(v) if v.value == 0.0 => 0.0,
            Ok(v) => v.value * r.powf(n as f64 - 1.0) * angular(r),
            Err(e) => {
                failure.lock().expect("failure slot").get_or_insert(e);
                0.0
            }
        }
    };
    let spec = QuadratureSpec::default()
        .with_rel_tol(1e-9)
        .with_abs_tol(1e-12)
        .with_max_nodes(20_000)
        .with_tail(TailClass::Exponential);
    let res = integrate_half_line(&g, &[], &spec)?;
    if let Some(e) = failure.into_inner().expect("failure slot") {
        return Err(e);
    }
    accept(res)
}
