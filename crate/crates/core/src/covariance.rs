//! Grid-indexed estimates of `M(t) = E[x xᵀ]`, the long-run covariance
//! `Λ(t)` of `L_i = x_i e_i`, and the sandwich `Ξ(t) = M⁻¹ Λ M⁻¹`.
//!
//! `Λ̂` smooths the symmetrized truncated products
//!
//! ```text
//! λ_i = L_i L_iᵀ + 2 L_i Σ_{0 < j−i ≤ m} L_jᵀ    (i ≤ m)
//! λ_i = L_i Σ_{|j−i| ≤ m} L_jᵀ                  (m < i < n − m)
//! λ_i = L_i L_iᵀ + 2 L_i Σ_{0 < i−j ≤ m} L_jᵀ    (i ≥ n − m)
//! ```
//!
//! where the window `m = n τ ϱ` is the truncation lag.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{EvaluationGrid, RegressionData};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg;
use crate::locfit::{smooth_series, smoother_gcv, LocalLinearFit};

/// Relative eigenvalue floor applied to every `Λ̂(t)`.
pub const LAMBDA_EIGEN_FLOOR: f64 = 1e-10;

/// Bandwidth candidates scanned by GCV for `ϖ` and `τ`.
pub fn default_covariance_bandwidths() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "value")]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "value")]
pub enum LagChoice {
    /// Data-driven rule with cap `⌊n^{1/2}⌋`.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOptions {
    pub varpi: Bandwidth,
    pub tau: Bandwidth,
    pub lag: LagChoice,
    /// Candidates for GCV selection of `ϖ` and `τ`.
    pub candidates: Vec<f64>,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self {
            varpi: Bandwidth::Auto,
            tau: Bandwidth::Auto,
            lag: LagChoice::Auto,
            candidates: default_covariance_bandwidths(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBandwidths {
    pub varpi: f64,
    pub tau: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct CovarianceField {
    grid: EvaluationGrid,
    m_hat: Vec<DMatrix<f64>>,
    lambda_hat: Vec<DMatrix<f64>>,
    xi_hat: Vec<DMatrix<f64>>,
    flags: Vec<bool>,
    bandwidths: CovarianceBandwidths,
    truncation_lag: usize,
}

impl CovarianceField {
    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }
    pub fn m(&self, k: usize) -> &DMatrix<f64> {
        &self.m_hat[k]
    }
    pub fn lambda(&self, k: usize) -> &DMatrix<f64> {
        &self.lambda_hat[k]
    }
    pub fn xi(&self, k: usize) -> &DMatrix<f64> {
        &self.xi_hat[k]
    }
    pub fn m_field(&self) -> &[DMatrix<f64>] {
        &self.m_hat
    }
    pub fn lambda_field(&self) -> &[DMatrix<f64>] {
        &self.lambda_hat
    }
    pub fn xi_field(&self) -> &[DMatrix<f64>] {
        &self.xi_hat
    }
    /// Grid points where `M̂(t)` could not be inverted.
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
    pub fn bandwidths(&self) -> CovarianceBandwidths {
        self.bandwidths
    }
    pub fn truncation_lag(&self) -> usize {
        self.truncation_lag
    }

    /// Assembles a field from precomputed pieces; `Ξ̂` is derived.
    pub fn from_parts(
        grid: EvaluationGrid,
        m_hat: Vec<DMatrix<f64>>,
        lambda_hat: Vec<DMatrix<f64>>,
        bandwidths: CovarianceBandwidths,
        truncation_lag: usize,
    ) -> Result<Self> {
        if m_hat.len() != grid.len() || lambda_hat.len() != grid.len() {
            return Err(Error::invalid("covariance pieces do not match the grid"));
        }
        let (xi_hat, flags) = sandwich_xi(&m_hat, &lambda_hat)?;
        Ok(Self {
            grid,
            m_hat,
            lambda_hat,
            xi_hat,
            flags,
            bandwidths,
            truncation_lag,
        })
    }
}

fn packed_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|j| (j..p).map(move |k| (j, k))).collect()
}

fn unpack(smoothed: &[Vec<f64>], p: usize, g: usize) -> Vec<DMatrix<f64>> {
    let pairs = packed_pairs(p);
    (0..g)
        .map(|k| {
            let mut m = DMatrix::zeros(p, p);
            for (e, &(a, b)) in pairs.iter().enumerate() {
                m[(a, b)] = smoothed[e][k];
                m[(b, a)] = smoothed[e][k];
            }
            m
        })
        .collect()
}

fn outer_series(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = x.nrows();
    packed_pairs(x.ncols())
        .into_iter()
        .map(|(a, b)| (0..n).map(|i| x[(i, a)] * x[(i, b)]).collect())
        .collect()
}

/// `M̂(t) = Σ_i x_i x_iᵀ ω_{i,ϖ}(t)`.
pub fn estimate_m(
    data: &RegressionData,
    kernel: &Kernel,
    varpi: f64,
    grid: &EvaluationGrid,
) -> Result<Vec<DMatrix<f64>>> {
    let series = outer_series(data.x());
    let smoothed = smooth_series(&series, kernel, varpi, grid)?;
    Ok(unpack(&smoothed, data.p(), grid.len()))
}

/// The symmetrized `(λ_i + λ_iᵀ)/2` series, packed upper triangle, for a
/// truncation window of `lag` observations.
pub fn lambda_products(l: &DMatrix<f64>, lag: usize) -> Result<Vec<Vec<f64>>> {
    let (n, p) = l.shape();
    if lag >= n {
        return Err(Error::invalid(format!(
            "truncation window {lag} is not shorter than the series ({n})"
        )));
    }
    // prefix[i] = Σ_{j < i} L_j
    let mut prefix = DMatrix::<f64>::zeros(n + 1, p);
    for i in 0..n {
        for c in 0..p {
            prefix[(i + 1, c)] = prefix[(i, c)] + l[(i, c)];
        }
    }
    let window = |lo: usize, hi: usize, c: usize| prefix[(hi, c)] - prefix[(lo, c)];
    let pairs = packed_pairs(p);
    let mut out = vec![vec![0.0; n]; pairs.len()];
    let mut s = vec![0.0; p];
    for i in 0..n {
        // One-based position i + 1.
        let pos = i + 1;
        if pos <= lag {
            let hi = (i + 1 + lag).min(n);
            for c in 0..p {
                s[c] = l[(i, c)] + 2.0 * window(i + 1, hi, c);
            }
        } else if pos >= n - lag {
            let lo = i - lag;
            for c in 0..p {
                s[c] = l[(i, c)] + 2.0 * window(lo, i, c);
            }
        } else {
            for c in 0..p {
                s[c] = window(i - lag, i + lag + 1, c);
            }
        }
        for (e, &(a, b)) in pairs.iter().enumerate() {
            out[e][i] = 0.5 * (l[(i, a)] * s[b] + s[a] * l[(i, b)]);
        }
    }
    Ok(out)
}

fn lag_window(n: usize, tau: f64, rho: f64) -> Result<usize> {
    let m = n as f64 * tau * rho;
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::invalid("n·τ·ϱ must be a non-negative number"));
    }
    Ok((m + 1e-9).floor() as usize)
}

/// `Λ̂(t)` from the `n×p` matrix of products `L_i`, with truncation window
/// `⌊n τ ϱ⌋` and smoothing bandwidth `τ`. Each estimate is projected onto
/// the positive semidefinite cone.
pub fn estimate_lambda(
    l: &DMatrix<f64>,
    kernel: &Kernel,
    tau: f64,
    rho: f64,
    grid: &EvaluationGrid,
) -> Result<Vec<DMatrix<f64>>> {
    let lag = lag_window(l.nrows(), tau, rho)?;
    let series = lambda_products(l, lag)?;
    let smoothed = smooth_series(&series, kernel, tau, grid)?;
    Ok(unpack(&smoothed, l.ncols(), grid.len())
        .iter()
        .map(|m| linalg::psd_project(m, LAMBDA_EIGEN_FLOOR))
        .collect())
}

fn batch_long_run_sd(series: &[f64]) -> f64 {
    let len = series.len();
    let batch = ((len as f64).cbrt().floor() as usize).max(1);
    let batches = len / batch;
    if batches < 2 {
        return f64::INFINITY;
    }
    let mean: f64 = series[..batches * batch].iter().sum::<f64>() / (batches * batch) as f64;
    let var: f64 = series
        .chunks_exact(batch)
        .map(|c| (c.iter().sum::<f64>() / batch as f64 - mean).powi(2))
        .sum::<f64>()
        / (batches - 1) as f64;
    (batch as f64 * var).sqrt()
}

/// Data-driven truncation lag.
///
/// For each `k ≥ 1` the statistic `|n^{-1/2} Σ_i L_iᵀ L_{i+k}|` is compared
/// with `1.96 σ̂_k`, where `σ̂_k` is the batch-means long-run standard
/// deviation (batch length `⌊n^{1/3}⌋`) of the demeaned products. The scan
/// stops at the first lag that is not significant; the previous lag is
/// returned. `cap` is clamped to `n/4`.
pub fn select_truncation_lag(l: &DMatrix<f64>, cap: usize) -> usize {
    let (n, p) = l.shape();
    let cap = cap.min(n / 4);
    let scale = (n as f64).sqrt();
    let mut chosen = 0;
    for k in 1..=cap {
        let prods: Vec<f64> = (0..n - k)
            .map(|i| (0..p).map(|c| l[(i, c)] * l[(i + k, c)]).sum())
            .collect();
        let stat = prods.iter().sum::<f64>().abs() / scale;
        let mean = prods.iter().sum::<f64>() / prods.len() as f64;
        let centered: Vec<f64> = prods.iter().map(|v| v - mean).collect();
        if stat > 1.96 * batch_long_run_sd(&centered) {
            chosen = k;
        } else {
            break;
        }
    }
    chosen
}

/// Default cap `⌊n^{1/2}⌋` for the lag rule.
pub fn default_lag_cap(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

/// `Ξ̂(t) = M̂(t)⁻¹ Λ̂(t) M̂(t)⁻¹`, symmetrized. Points where `M̂(t)` has
/// condition number above 1e12 are flagged and carry NaN.
pub fn sandwich_xi(
    m_hat: &[DMatrix<f64>],
    lambda_hat: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<bool>)> {
    if m_hat.len() != lambda_hat.len() {
        return Err(Error::invalid("M̂ and Λ̂ fields differ in length"));
    }
    let mut flags = vec![false; m_hat.len()];
    let xi = m_hat
        .iter()
        .zip(lambda_hat)
        .enumerate()
        .map(|(k, (m, lam))| match linalg::spd_inverse(m) {
            Ok(inv) => linalg::symmetrize(&(&inv * lam * &inv)),
            Err(_) => {
                flags[k] = true;
                DMatrix::from_element(m.nrows(), m.ncols(), f64::NAN)
            }
        })
        .collect();
    Ok((xi, flags))
}

/// `Ξ_{A,W,l} = tr ∫ (W^{1/2} A Ξ Aᵀ W^{1/2})^l dt` with quadrature weights
/// `weights` (zero weight skips a point).
pub fn xi_functional(
    xi: &[DMatrix<f64>],
    a: &DMatrix<f64>,
    w: &[DMatrix<f64>],
    weights: &[f64],
    l: u32,
) -> Result<f64> {
    if !(1..=2).contains(&l) {
        return Err(Error::invalid("power l must be 1 or 2"));
    }
    let mut total = 0.0;
    for k in 0..xi.len() {
        if weights[k] == 0.0 {
            continue;
        }
        let root = linalg::spd_sqrt(&w[k])?;
        let inner = &root * a * &xi[k] * a.transpose() * &root;
        let tr = if l == 1 {
            inner.trace()
        } else {
            (&inner * &inner).trace()
        };
        total += weights[k] * tr;
    }
    Ok(total)
}

fn gcv_select(series: &[Vec<f64>], kernel: &Kernel, candidates: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &b in candidates {
        if let Ok(score) = smoother_gcv(series, kernel, b) {
            if score.is_finite() && best.is_none_or(|(_, s)| score < s) {
                best = Some((b, score));
            }
        }
    }
    best.map(|(b, _)| b)
        .ok_or_else(|| Error::numerical("GCV failed for every covariance bandwidth candidate"))
}

/// Full plug-in: `L̃_i = x_i ẽ_i` from the fit residuals, lag rule, GCV
/// bandwidths, and the sandwich.
pub fn estimate_covariance_field(
    data: &RegressionData,
    fit: &LocalLinearFit,
    kernel: &Kernel,
    options: &CovarianceOptions,
) -> Result<CovarianceField> {
    let n = data.n();
    let grid = fit.grid().clone();
    let resid = fit.residuals();
    let l = DMatrix::from_fn(n, data.p(), |i, c| data.x()[(i, c)] * resid[i]);

    let varpi = match options.varpi {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Auto => {
            let series = outer_series(data.x());
            gcv_select(&series, kernel, &options.candidates)?.max((n as f64).powf(-0.2))
        }
    };
    let lag = match options.lag {
        LagChoice::Fixed(m) => m,
        LagChoice::Auto => select_truncation_lag(&l, default_lag_cap(n)),
    };
    let products = lambda_products(&l, lag)?;
    let tau = match options.tau {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Auto => gcv_select(&products, kernel, &options.candidates)?,
    };
    let rho = lag as f64 / (n as f64 * tau);

    let m_hat = estimate_m(data, kernel, varpi, &grid)?;
    let lambda_hat: Vec<DMatrix<f64>> = unpack(
        &smooth_series(&products, kernel, tau, &grid)?,
        data.p(),
        grid.len(),
    )
    .iter()
    .map(|m| linalg::psd_project(m, LAMBDA_EIGEN_FLOOR))
    .collect();

    CovarianceField::from_parts(
        grid,
        m_hat,
        lambda_hat,
        CovarianceBandwidths { varpi, tau, rho },
        lag,
    )
}
