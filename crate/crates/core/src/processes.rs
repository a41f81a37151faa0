//! Simulators for the data-generating processes used in the Monte Carlo
//! studies: the two regression designs driven by Legendre-modulated moving
//! averages, time-varying autoregressions, and an AR-ARCH process.
//!
//! Times are `t = i/n`. Pre-sample values (indices `≤ 0`) use innovations
//! drawn earlier from the same seeded stream, and any time-varying
//! coefficient is frozen at `t = 0` there.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::rng;

/// Truncation point of the moving-average representations.
pub const MA_TERMS: usize = 60;

/// Burn-in of the AR-ARCH recursion.
pub const AR_ARCH_BURN_IN: usize = 200;

/// Innovations fed to each frozen-coefficient recursion; older ones are
/// dropped, which changes the value by at most `ρ^400` times the path scale.
pub const FROZEN_HISTORY: usize = 400;

/// Stability margin for TVAR coefficient functions.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// `P_j(x)` by the three-term recurrence.
pub fn legendre(j: usize, x: f64) -> Result<f64> {
    if j > 10 {
        return Err(Error::Domain(format!("Legendre order {j} exceeds 10")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(j, x))
}

fn legendre_unchecked(j: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if j == 0 {
        return prev;
    }
    for k in 1..j {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnovationLaw {
    Rademacher,
    Gaussian,
}

impl InnovationLaw {
    fn draw<R: rand::Rng>(self, r: &mut R) -> f64 {
        match self {
            InnovationLaw::Rademacher => rng::rademacher(r),
            InnovationLaw::Gaussian => rng::gaussian(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    ModelI,
    ModelIi,
    Tvar,
    ArArch,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::ModelI => "i",
            ProcessKind::ModelIi => "ii",
            ProcessKind::Tvar => "tvar",
            ProcessKind::ArArch => "ararch",
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "model_i" | "1" => Ok(ProcessKind::ModelI),
            "ii" | "model_ii" | "2" => Ok(ProcessKind::ModelIi),
            "tvar" => Ok(ProcessKind::Tvar),
            "ararch" | "ar_arch" | "ar-arch" => Ok(ProcessKind::ArArch),
            other => Err(Error::invalid(format!("unknown model '{other}'"))),
        }
    }
}

/// A simulated regression sample with its relevant columns.
#[derive(Debug, Clone)]
pub struct ModelSample {
    pub data: RegressionData,
    /// Indices of the columns with non-zero coefficient functions.
    pub truth: Vec<usize>,
    /// Raw innovations `ε_{k,1..6}`, oldest first; row `MA_TERMS + extra + i − 1`
    /// belongs to time `i`.
    pub innovations: DMatrix<f64>,
}

/// Legendre-modulated moving averages shared by both regression designs.
struct MaDesign {
    /// `x_i` for pre-sample and sample times, oldest first.
    x: DMatrix<f64>,
    /// `e_i` likewise.
    e: Vec<f64>,
    eps: DMatrix<f64>,
}

/// Builds `x_i = Σ_{j≤J} P(t_i)^j ξ_{i−j}` and `e_i = Σ_{j≤J} c(t_i)^j ε_{i−j,6}`
/// for `i = 1 − extra, …, n` with `P(t) = diag(P_k(2t − 1)/4)`,
/// `c(t) = P_6(2t − 1)/4` and `ξ_k = M⋄ (ε_{k,1}, …, ε_{k,5})ᵀ`.
fn ma_design(n: usize, extra: usize, seed: u64) -> MaDesign {
    let total = n + extra;
    let rows = total + MA_TERMS;
    let mut r = rng::stream(seed);
    let mut eps = DMatrix::zeros(rows, 6);
    for k in 0..rows {
        for c in 0..6 {
            eps[(k, c)] = rng::rademacher(&mut r);
        }
    }
    let mix = DMatrix::from_fn(5, 5, |a, b| 0.2f64.powi(a.abs_diff(b) as i32));
    let xi = DMatrix::from_fn(rows, 5, |k, c| {
        (0..5).map(|d| mix[(c, d)] * eps[(k, d)]).sum::<f64>()
    });
    let mut x = DMatrix::zeros(total, 5);
    let mut e = vec![0.0; total];
    for s in 0..total {
        // Time index i = s + 1 − extra; pre-sample times are frozen at 0.
        let i = s as isize + 1 - extra as isize;
        let t = (i.max(0) as f64) / n as f64;
        let z = 2.0 * t - 1.0;
        let k = s + MA_TERMS;
        for c in 0..5 {
            let ratio = legendre_unchecked(c + 1, z) / 4.0;
            let mut pow = 1.0;
            let mut acc = 0.0;
            for j in 0..=MA_TERMS {
                acc += pow * xi[(k - j, c)];
                pow *= ratio;
            }
            x[(s, c)] = acc;
        }
        let ratio = legendre_unchecked(6, z) / 4.0;
        let mut pow = 1.0;
        let mut acc = 0.0;
        for j in 0..=MA_TERMS {
            acc += pow * eps[(k - j, 5)];
            pow *= ratio;
        }
        e[s] = acc;
    }
    MaDesign { x, e, eps }
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::invalid(format!("n must be at least {min}, got {n}")));
    }
    Ok(())
}

/// Linear model with heteroscedastic errors:
///
/// ```text
/// y_i = (2t − 1)² + 2 x_{i,1} + 2 log(t + 1) x_{i,2} + 0.5 (x_{i,2}² + x_{i,3}²)^{1/2} e_i
/// ```
///
/// Columns are `intercept, x1, …, x5`; the relevant set is
/// `{intercept, x1, x2}`.
pub fn simulate_model_i(n: usize, seed: u64) -> Result<ModelSample> {
    check_n(n, 100)?;
    let d = ma_design(n, 0, seed);
    let mut design = DMatrix::zeros(n, 6);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let t = (i + 1) as f64 / n as f64;
        design[(i, 0)] = 1.0;
        for c in 0..5 {
            design[(i, c + 1)] = d.x[(i, c)];
        }
        let (x1, x2, x3) = (d.x[(i, 0)], d.x[(i, 1)], d.x[(i, 2)]);
        y[i] = (2.0 * t - 1.0).powi(2)
            + 2.0 * x1
            + 2.0 * (t + 1.0).ln() * x2
            + 0.5 * (x2 * x2 + x3 * x3).sqrt() * d.e[i];
    }
    let mut names = vec!["intercept".to_string()];
    names.extend((1..=5).map(|k| format!("x{k}")));
    Ok(ModelSample {
        data: RegressionData::new(y, design, names)?,
        truth: vec![0, 1, 2],
        innovations: d.eps,
    })
}

/// Number of response lags offered as candidates in model (ii).
pub const MODEL_II_LAGS: usize = 3;

/// Linear model with autoregressive effects:
///
/// ```text
/// y_i = 0.4 sin(2πt) y_{i−1} + 0.3 x_{i,1} + 0.4 (2t − 1)³ x_{i,2} + exp(0.5t − 2) ε_{i,6}
/// ```
///
/// The recursion runs over `i = −2, …, n` from `y_{−3} = 0`, with pre-sample
/// coefficients frozen at `t = 0` (where the autoregressive term vanishes).
/// Columns are `x1, …, x5, ylag1, ylag2, ylag3` with no intercept; the
/// relevant set is `{x1, x2, ylag1}`.
pub fn simulate_model_ii(n: usize, seed: u64) -> Result<ModelSample> {
    check_n(n, 100)?;
    let extra = MODEL_II_LAGS;
    let d = ma_design(n, extra, seed);
    let total = n + extra;
    let mut path = vec![0.0; total];
    let mut prev = 0.0;
    for s in 0..total {
        let i = s as isize + 1 - extra as isize;
        let t = (i.max(0) as f64) / n as f64;
        let noise = d.eps[(s + MA_TERMS, 5)];
        let v = 0.4 * (2.0 * std::f64::consts::PI * t).sin() * prev
            + 0.3 * d.x[(s, 0)]
            + 0.4 * (2.0 * t - 1.0).powi(3) * d.x[(s, 1)]
            + (0.5 * t - 2.0).exp() * noise;
        path[s] = v;
        prev = v;
    }
    let mut design = DMatrix::zeros(n, 5 + extra);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let s = i + extra;
        y[i] = path[s];
        for c in 0..5 {
            design[(i, c)] = d.x[(s, c)];
        }
        for l in 1..=extra {
            design[(i, 4 + l)] = path[s - l];
        }
    }
    let mut names: Vec<String> = (1..=5).map(|k| format!("x{k}")).collect();
    names.extend((1..=extra).map(|l| format!("ylag{l}")));
    Ok(ModelSample {
        data: RegressionData::new(y, design, names)?,
        truth: vec![0, 1, 5],
        innovations: d.eps,
    })
}

pub type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `y_i = a_1(t) y_{i−1} + … + a_p(t) y_{i−p} + σ ε_i`.
#[derive(Clone)]
pub struct TvarSpec {
    pub coefficients: Vec<CoefficientFn>,
    pub innovation: InnovationLaw,
    pub noise_scale: f64,
}

impl fmt::Debug for TvarSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TvarSpec")
            .field("order", &self.coefficients.len())
            .field("innovation", &self.innovation)
            .field("noise_scale", &self.noise_scale)
            .finish()
    }
}

impl TvarSpec {
    pub fn new(coefficients: Vec<CoefficientFn>, innovation: InnovationLaw, noise_scale: f64) -> Self {
        Self {
            coefficients,
            innovation,
            noise_scale,
        }
    }

    /// The single-lag example `a_1(t) = 0.5 + 0.3 sin(2πt)` with Gaussian noise.
    pub fn example() -> Self {
        Self::new(
            vec![Arc::new(|t: f64| 0.5 + 0.3 * (2.0 * std::f64::consts::PI * t).sin())],
            InnovationLaw::Gaussian,
            1.0,
        )
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    fn at(&self, t: f64) -> Vec<f64> {
        self.coefficients.iter().map(|a| a(t)).collect()
    }
}

/// Spectral radius of the companion matrix of `(a_1, …, a_p)`.
pub fn companion_radius(a: &[f64]) -> f64 {
    let p = a.len();
    match p {
        0 => 0.0,
        1 => a[0].abs(),
        _ => {
            let mut c = DMatrix::zeros(p, p);
            for (j, v) in a.iter().enumerate() {
                c[(0, j)] = *v;
            }
            for i in 1..p {
                c[(i, i - 1)] = 1.0;
            }
            c.complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }
    }
}

/// Checks `max_t ρ(A(t)) < 1 − 1e-6` on `points` equally spaced times.
pub fn check_stability(spec: &TvarSpec, points: usize) -> Result<f64> {
    if spec.order() == 0 {
        return Err(Error::invalid("TVAR needs at least one coefficient function"));
    }
    let mut worst = (0.0, 0.0);
    for k in 0..points.max(2) {
        let t = k as f64 / (points.max(2) - 1) as f64;
        let a = spec.at(t);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("coefficient function not finite at t = {t}")));
        }
        let r = companion_radius(&a);
        if r > worst.0 {
            worst = (r, t);
        }
    }
    if worst.0 >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable {
            radius: worst.0,
            t: worst.1,
        });
    }
    Ok(worst.0)
}

/// A TVAR path and the frozen-coefficient approximation sharing its
/// innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub path: Vec<f64>,
    /// `G(i/n; F_i)`: the stationary recursion with coefficients frozen at
    /// `i/n`, run over the same innovations (the last [`FROZEN_HISTORY`] of them).
    pub frozen: Vec<f64>,
}

fn tvar_innovations(spec: &TvarSpec, count: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..count)
        .map(|_| spec.noise_scale * spec.innovation.draw(&mut r))
        .collect()
}

fn recurse(a: &dyn Fn(usize) -> Vec<f64>, eps: &[f64], start: &[f64], upto: usize) -> Vec<f64> {
    let p = start.len();
    let mut out = start.to_vec();
    out.reserve(upto);
    for s in 0..upto {
        let coef = a(s);
        let v = eps[s]
            + coef
                .iter()
                .enumerate()
                .map(|(j, c)| c * out[p + s - j - 1])
                .sum::<f64>();
        out.push(v);
    }
    out.split_off(p)
}

/// Simulates `y_1, …, y_n` after `burn_in` steps from the supplied start
/// (oldest first, length `p`) or from zeros.
pub fn simulate_tvar(
    spec: &TvarSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
    start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    Ok(simulate_tvar_coupled_inner(spec, n, burn_in, seed, start, false)?.path)
}

/// Path and frozen-coefficient counterpart at matched innovations.
pub fn simulate_tvar_coupled(spec: &TvarSpec, n: usize, burn_in: usize, seed: u64) -> Result<CoupledPaths> {
    simulate_tvar_coupled_inner(spec, n, burn_in, seed, None, true)
}

fn simulate_tvar_coupled_inner(
    spec: &TvarSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
    start: Option<&[f64]>,
    frozen: bool,
) -> Result<CoupledPaths> {
    check_n(n, 50)?;
    check_stability(spec, 1001)?;
    let p = spec.order();
    let zeros = vec![0.0; p];
    let start = start.unwrap_or(&zeros);
    if start.len() != p {
        return Err(Error::invalid(format!("start must have {p} values")));
    }
    let total = burn_in + n;
    let eps = tvar_innovations(spec, total, seed);
    let time = |s: usize| (s as f64 + 1.0 - burn_in as f64).max(0.0) / n as f64;
    let full = recurse(&|s| spec.at(time(s)), &eps, start, total);
    let path = full[burn_in..].to_vec();
    let frozen = if frozen {
        (0..n)
            .map(|i| {
                let s = burn_in + i;
                let a = spec.at(time(s));
                let from = (s + 1).saturating_sub(FROZEN_HISTORY);
                let mut hist = if from == 0 { start.to_vec() } else { vec![0.0; p] };
                for e in &eps[from..=s] {
                    let v = e + a
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * hist[hist.len() - 1 - j])
                        .sum::<f64>();
                    hist.push(v);
                }
                *hist.last().expect("non-empty")
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(CoupledPaths { path, frozen })
}

/// AR-ARCH series `y_0, …, y_n`:
///
/// ```text
/// y_i = 0.5 y_{i−1} + 0.25 [1 + {1 + exp(3 − 6t)}⁻¹] e_i
/// e_i = (1 + 0.25 e_{i−1}²)^{1/2} ε_i
/// ```
///
/// with `ε_i` i.i.d. `N(0, noise_scale²)` and 200 burn-in steps at `t = 0`.
pub fn simulate_ar_arch_with(n: usize, seed: u64, noise_scale: f64) -> Result<Vec<f64>> {
    check_n(n, 100)?;
    let mut r = rng::stream(seed);
    let (mut y, mut e) = (0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(n + 1);
    for s in 0..AR_ARCH_BURN_IN + n + 1 {
        let i = s as isize - AR_ARCH_BURN_IN as isize;
        let t = i.max(0) as f64 / n as f64;
        let eps = noise_scale * rng::gaussian(&mut r);
        e = (1.0 + 0.25 * e * e).sqrt() * eps;
        y = 0.5 * y + 0.25 * (1.0 + 1.0 / (1.0 + (3.0 - 6.0 * t).exp())) * e;
        if i >= 0 {
            out.push(y);
        }
    }
    Ok(out)
}

pub fn simulate_ar_arch(n: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_ar_arch_with(n, seed, 1.0)
}

/// Regression of `y_i` on `y_{i−1}` (no intercept), `i = 1..n`.
pub fn ar_arch_regression(n: usize, seed: u64) -> Result<RegressionData> {
    ar_design(&simulate_ar_arch(n, seed)?, &[1], false)
}

/// Autoregressive design from a series: response `y_i`, columns
/// `y_{i−l}` for each lag, optionally preceded by an intercept. The first
/// `max(lags)` values only serve as lags.
pub fn ar_design(series: &[f64], lags: &[usize], intercept: bool) -> Result<RegressionData> {
    let max = lags.iter().copied().max().unwrap_or(0);
    if lags.contains(&0) {
        return Err(Error::invalid("lags must be positive"));
    }
    if series.len() <= max {
        return Err(Error::invalid("series shorter than the largest lag"));
    }
    let n = series.len() - max;
    let p = lags.len() + usize::from(intercept);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let s = i + max;
        let mut c = 0;
        if intercept {
            x[(i, 0)] = 1.0;
            c = 1;
        }
        for (k, &l) in lags.iter().enumerate() {
            x[(i, c + k)] = series[s - l];
        }
    }
    let y = DVector::from_fn(n, |i, _| series[i + max]);
    let mut names = Vec::with_capacity(p);
    if intercept {
        names.push("intercept".to_string());
    }
    names.extend(lags.iter().map(|l| format!("ylag{l}")));
    RegressionData::new(y, x, names)
}
