//! Weighted radial integration on `[0, ∞)` and plain integration on bounded intervals.
//!
//! The engine is a globally adaptive 21-point Gauss-Kronrod rule with the QUADPACK
//! error heuristic. Radial integrals are split at `split_radius`: the interior piece
//! goes through `r = R y²` (which flattens power-type singularities at the origin),
//! the exterior piece through `r = R + x/(1-x)` for algebraic tails or
//! `r = R - ln(1-x)` for exponential ones.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Environment variable that overrides the default relative tolerance.
pub const TOL_ENV: &str = "CRITEX_QUAD_TOL";

/// Decay class of an integrand's tail; reporting hint only, shells handle both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailClass {
    Algebraic,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_nodes: usize,
    pub split_radius: f64,
    pub tail: TailClass,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_nodes: 20_000,
            split_radius: 1.0,
            tail: TailClass::Algebraic,
        }
    }
}

impl QuadratureSpec {
    /// Defaults, with `rel_tol` taken from `CRITEX_QUAD_TOL` when it parses.
    pub fn from_env() -> Self {
        let mut spec = QuadratureSpec::default();
        if let Some(tol) = std::env::var(TOL_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|t| *t > 0.0)
        {
            spec.rel_tol = tol;
        }
        spec
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }

    pub fn with_split(mut self, split_radius: f64) -> Self {
        self.split_radius = split_radius;
        self
    }

    pub fn with_tail(mut self, tail: TailClass) -> Self {
        self.tail = tail;
        self
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        let bad = |msg: &str| Err(QuadratureError::InvalidSpec(msg.to_string()));
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_nodes < 15 {
            return bad("max_nodes must be at least 15");
        }
        if !(self.split_radius > 0.0) {
            return bad("split_radius must be positive");
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub nodes_used: usize,
    pub converged: bool,
}

impl QuadratureResult {
    fn combine(self, other: QuadratureResult) -> QuadratureResult {
        QuadratureResult {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            nodes_used: self.nodes_used + other.nodes_used,
            converged: self.converged && other.converged,
        }
    }

    fn scaled(self, factor: f64) -> QuadratureResult {
        QuadratureResult {
            value: self.value * factor,
            error_estimate: self.error_estimate * factor.abs(),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
    #[error("integral diverges: tail shells stop shrinking (ratio {shell_ratio:.6} near r = {radius:e})")]
    Divergent { shell_ratio: f64, radius: f64 },
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_148_000,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_146,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |x: f64| -> Result<f64, QuadratureError> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { at: x })
        }
    };
    let fc = eval(center)?;
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut f1 = [0.0; 10];
    let mut f2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let a = eval(center - dx)?;
        let b = eval(center + dx)?;
        f1[j] = a;
        f2[j] = b;
        res_k += WGK[j] * (a + b);
        res_abs += WGK[j] * (a.abs() + b.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (a + b);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((f1[j] - mean).abs() + (f2[j] - mean).abs());
    }
    let scale = half.abs();
    let value = res_k * half;
    res_abs *= scale;
    res_asc *= scale;
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment {
        lo,
        hi,
        value,
        error,
    })
}

/// `∫_lo^hi f`, adaptively. Non-convergence within `max_nodes` is reported through
/// `converged = false` together with the best estimate.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError> {
    spec.validate()?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(QuadratureError::InvalidInterval { lo, hi });
    }
    adaptive(&f, lo, hi, spec)
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError> {
    let first = gauss_kronrod(f, lo, hi)?;
    let mut nodes = 21;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    // segments too narrow to split further; their error still counts
    let mut frozen_error = 0.0;
    heap.push(first);
    loop {
        if error <= spec.target(value) {
            break;
        }
        if nodes + 42 > spec.max_nodes {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        let width = worst.hi - worst.lo;
        if width <= 64.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) || mid <= worst.lo
        {
            frozen_error += worst.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = gauss_kronrod(f, worst.lo, mid)?;
        let right = gauss_kronrod(f, mid, worst.hi)?;
        nodes += 42;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed accumulated cancellation in the running totals
    let value_sum: f64 = heap.iter().map(|s| s.value).sum::<f64>();
    let error_sum: f64 = heap.iter().map(|s| s.error).sum::<f64>() + frozen_error;
    let value = if heap.is_empty() { value } else { value_sum };
    let error = if heap.is_empty() { error } else { error_sum };
    Ok(QuadratureResult {
        value,
        error_estimate: error,
        nodes_used: nodes,
        converged: error <= spec.target(value),
    })
}

/// `|S^{n-1}|`, the surface area of the unit sphere in `R^n`.
pub fn sphere_area(n: u32) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// `|B_1|` in `R^n`.
pub fn ball_volume(n: u32) -> f64 {
    sphere_area(n) / n as f64
}

/// Probes the tail for divergence: if the shells `[R 2^j, R 2^{j+1}]` far out stop
/// shrinking, the integral cannot converge.
fn probe_divergence<G: Fn(f64) -> f64>(g: &G, start: f64) -> Result<(), QuadratureError> {
    let spec = QuadratureSpec::default().with_rel_tol(1e-6).with_max_nodes(2_000);
    let mut shells = Vec::with_capacity(5);
    for j in 40..45 {
        let lo = start * 2f64.powi(j);
        let hi = 2.0 * lo;
        let shell = adaptive(g, lo, hi, &spec)?;
        shells.push((lo, shell.value.abs()));
    }
    let ratios: Vec<f64> = shells
        .windows(2)
        .map(|w| if w[0].1 > 0.0 { w[1].1 / w[0].1 } else { 0.0 })
        .collect();
    if shells[0].1 > 0.0 && ratios.iter().all(|r| *r >= 0.999) {
        let (radius, _) = shells[shells.len() - 1];
        return Err(QuadratureError::Divergent {
            shell_ratio: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
            radius,
        });
    }
    Ok(())
}

/// Most doublings of the tail radius before giving up.
const MAX_SHELLS: i32 = 1000;

/// `∫_lo^∞ g(r) dr`, summed over doubling shells `[R 2^j, R 2^{j+1}]`, `R = max(lo, 1)`.
///
/// Summation stops once the geometric remainder estimate `s_j ρ/(1-ρ)`, with `ρ` the ratio
/// of the last two shells, drops below a quarter of the target. Exponential tails end as
/// soon as the shells underflow.
pub fn integrate_tail<G: Fn(f64) -> f64>(
    g: G,
    lo: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError> {
    spec.validate()?;
    if !lo.is_finite() {
        return Err(QuadratureError::InvalidInterval { lo, hi: f64::INFINITY });
    }
    let base = lo.abs().max(1.0);
    probe_divergence(&g, base)?;
    let mut total = if lo < base {
        adaptive(&g, lo, base, spec)?
    } else {
        QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            nodes_used: 0,
            converged: true,
        }
    };
    let mut prev: Option<f64> = None;
    let mut small_run = 0;
    for j in 0..MAX_SHELLS {
        let a = base * 2f64.powi(j);
        let b = 2.0 * a;
        if !b.is_finite() {
            break;
        }
        let shell = adaptive(&g, a, b, spec)?;
        let size = shell.value.abs();
        total = total.combine(shell);
        let target = spec.target(total.value);
        let remainder = match prev {
            Some(p) if p > 0.0 && size < p => {
                let rho = size / p;
                size * rho / (1.0 - rho)
            }
            Some(p) if p == 0.0 && size == 0.0 => 0.0,
            _ => f64::INFINITY,
        };
        prev = Some(size);
        // two consecutive small remainders guard against a lucky ratio
        if remainder <= 0.25 * target {
            small_run += 1;
            if small_run >= 2 {
                total.error_estimate += remainder;
                total.converged = total.converged && total.error_estimate <= target;
                return Ok(total);
            }
        } else {
            small_run = 0;
        }
    }
    total.converged = false;
    Ok(total)
}

/// `|S^{n-1}| ∫_0^∞ f(r) r^{n-1-s} dr`, i.e. `∫_{R^n} |x|^{-s} f(|x|) dx`.
pub fn integrate_radial<F: Fn(f64) -> f64>(
    f: F,
    n: u32,
    weight_power: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError> {
    integrate_radial_with_breaks(f, n, weight_power, &[], spec)
}

/// As [`integrate_radial`], with extra breakpoints where the integrand has kinks or jumps.
pub fn integrate_radial_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    n: u32,
    weight_power: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError> {
    spec.validate()?;
    let power = n as f64 - 1.0 - weight_power;
    if power <= -1.0 {
        return Err(QuadratureError::Divergent {
            shell_ratio: f64::INFINITY,
            radius: 0.0,
        });
    }
    let g = |r: f64| -> f64 {
        let v = f(r);
        if v == 0.0 {
            0.0
        } else {
            v * r.powf(power)
        }
    };
    integrate_half_line(&g, breaks, spec).map(|res| res.scaled(sphere_area(n)))
}

/// `∫_0^∞ g`, split at `split_radius` and at the given breakpoints.
pub fn integrate_half_line<G: Fn(f64) -> f64>(
    g: &G,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError> {
    spec.validate()?;
    let split = spec.split_radius;
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > 0.0)
        .collect();
    cuts.push(split);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let outer = *cuts.last().expect("split present");

    // origin piece: r = c y², dr = 2 c y dy
    let first = cuts[0];
    let inner = |y: f64| -> f64 {
        let r = first * y * y;
        let v = g(r);
        if v == 0.0 {
            0.0
        } else {
            2.0 * first * y * v
        }
    };
    let mut total = adaptive(&inner, 0.0, 1.0, spec)?;
    for w in cuts.windows(2) {
        total = total.combine(adaptive(g, w[0], w[1], spec)?);
    }
    let tail = integrate_tail(g, outer, spec)?;
    let mut total = total.combine(tail);
    total.converged = total.error_estimate <= spec.target(total.value) || total.converged;
    Ok(total)
}
