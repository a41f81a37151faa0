//! Variable selection by the information criterion
//! `VIC(D) = log RSS(D) + χ_n |D|`, dependence-corrected GCV for the
//! bandwidth, banded estimation of the error covariance, and the two-stage
//! bandwidth procedure.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{default_lag_cap, select_truncation_lag};
use crate::data::{EvaluationGrid, RegressionData};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::locfit::{LocalMoments, SubsetFit};

/// Largest design width for exhaustive search.
pub const MAX_EXHAUSTIVE_P: usize = 20;

/// `χ̂_n = n^{-2/5}`.
pub fn default_chi(n: usize) -> f64 {
    (n as f64).powf(-0.4)
}

/// `{0.05, 0.06, …, 0.95}`.
pub fn default_b_grid() -> Vec<f64> {
    (5..=95).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Search {
    #[default]
    Exhaustive,
    Forward,
}

impl std::str::FromStr for Search {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exhaustive" => Ok(Search::Exhaustive),
            "forward" => Ok(Search::Forward),
            other => Err(Error::invalid(format!("unknown search '{other}'"))),
        }
    }
}

/// Local linear fits of column subsets at one bandwidth on the observation
/// grid, sharing the kernel moments of the full design.
pub struct SubsetEvaluator<'a> {
    data: &'a RegressionData,
    grid: EvaluationGrid,
    moments: LocalMoments,
}

impl<'a> SubsetEvaluator<'a> {
    pub fn new(data: &'a RegressionData, kernel: &Kernel, b: f64) -> Result<Self> {
        let grid = EvaluationGrid::observation(data.n())?;
        let moments = LocalMoments::new(data, kernel, b, &grid)?;
        Ok(Self {
            data,
            grid,
            moments,
        })
    }

    fn check(&self, subset: &[usize]) -> Result<()> {
        let p = self.data.p();
        if subset.is_empty() {
            return Err(Error::invalid("subset must be non-empty"));
        }
        if let Some(&c) = subset.iter().find(|&&c| c >= p) {
            return Err(Error::invalid(format!("column {c} out of range for p = {p}")));
        }
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != subset.len() {
            return Err(Error::invalid("subset has repeated columns"));
        }
        Ok(())
    }

    fn fit(&self, subset: &[usize]) -> Result<SubsetFit> {
        self.check(subset)?;
        self.moments.solve(self.data, subset)
    }

    /// Residuals `y_i − x_{D,i}ᵀ β̃_D(i/n)` and the hat-matrix trace.
    pub fn residuals(&self, subset: &[usize]) -> Result<(DVector<f64>, f64)> {
        let fit = self.fit(subset)?;
        let trace = fit.hat_diag.as_ref().map_or(0.0, |h| h.iter().sum());
        Ok((fit.residuals(self.data, &self.grid), trace))
    }

    pub fn rss(&self, subset: &[usize]) -> Result<f64> {
        Ok(self.residuals(subset)?.0.norm_squared())
    }
}

/// `RSS(D)` after refitting on the columns in `subset`.
pub fn rss_subset(data: &RegressionData, subset: &[usize], kernel: &Kernel, b: f64) -> Result<f64> {
    SubsetEvaluator::new(data, kernel, b)?.rss(subset)
}

/// `log RSS + χ |D|`.
pub fn vic_from_rss(rss: f64, size: usize, chi: f64) -> Result<f64> {
    if !(rss > 0.0) {
        return Err(Error::numerical(
            "RSS is zero; the criterion diverges for saturated or noiseless fits",
        ));
    }
    Ok(rss.ln() + chi * size as f64)
}

pub fn vic(data: &RegressionData, subset: &[usize], kernel: &Kernel, b: f64, chi: f64) -> Result<f64> {
    vic_from_rss(rss_subset(data, subset, kernel, b)?, subset.len(), chi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub subset: Vec<usize>,
    pub names: Vec<String>,
    pub rss: f64,
    pub vic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<SubsetScore>,
    pub chi_n: f64,
    pub chosen: Vec<usize>,
    pub chosen_names: Vec<String>,
    pub search: Search,
    pub bandwidth_pilot: f64,
    pub bandwidth_final: f64,
}

/// Smaller VIC, then smaller `|D|`, then lexicographic order.
fn rank(a: &SubsetScore, b: &SubsetScore) -> Ordering {
    a.vic
        .total_cmp(&b.vic)
        .then(a.subset.len().cmp(&b.subset.len()))
        .then_with(|| a.subset.cmp(&b.subset))
}

fn score(ev: &SubsetEvaluator<'_>, subset: Vec<usize>, chi: f64) -> Result<SubsetScore> {
    let rss = ev.rss(&subset)?;
    let vic = vic_from_rss(rss, subset.len(), chi)?;
    let names = subset
        .iter()
        .map(|&c| ev.data.column_names()[c].clone())
        .collect();
    Ok(SubsetScore {
        subset,
        names,
        rss,
        vic,
    })
}

/// Minimizes VIC over column subsets at bandwidth `b`. Subsets whose fit
/// fails (for instance a duplicated column) are left out of the table.
///
/// Exhaustive search scores every non-empty subset. Forward search starts
/// from the best single column and adds the column that lowers VIC most
/// until no addition lowers it.
pub fn select_subset(
    data: &RegressionData,
    kernel: &Kernel,
    b: f64,
    chi: f64,
    search: Search,
) -> Result<SelectionReport> {
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::invalid(format!("chi must be a finite non-negative number, got {chi}")));
    }
    let p = data.p();
    let ev = SubsetEvaluator::new(data, kernel, b)?;
    let mut candidates = match search {
        Search::Exhaustive => {
            if p > MAX_EXHAUSTIVE_P {
                return Err(Error::invalid(format!(
                    "exhaustive search supports at most {MAX_EXHAUSTIVE_P} columns, got {p}"
                )));
            }
            (1u32..(1u32 << p))
                .into_par_iter()
                .map(|mask| {
                    let subset = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
                    score(&ev, subset, chi)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .filter_map(Result::ok)
                .collect()
        }
        Search::Forward => forward(&ev, p, chi)?,
    };
    candidates.sort_by(|a, b| {
        a.subset
            .len()
            .cmp(&b.subset.len())
            .then_with(|| a.subset.cmp(&b.subset))
    });
    let best = candidates
        .iter()
        .min_by(|a, b| rank(a, b))
        .ok_or_else(|| Error::numerical("no column subset could be fitted"))?;
    Ok(SelectionReport {
        chi_n: chi,
        chosen: best.subset.clone(),
        chosen_names: best.names.clone(),
        candidates,
        search,
        bandwidth_pilot: b,
        bandwidth_final: b,
    })
}

fn forward(ev: &SubsetEvaluator<'_>, p: usize, chi: f64) -> Result<Vec<SubsetScore>> {
    let mut seen: Vec<SubsetScore> = Vec::new();
    let mut current: Option<SubsetScore> = None;
    loop {
        let base: Vec<usize> = current.as_ref().map_or(Vec::new(), |c| c.subset.clone());
        let step = (0..p)
            .filter(|j| !base.contains(j))
            .map(|j| {
                let mut s = base.clone();
                s.push(j);
                s.sort_unstable();
                score(ev, s, chi)
            })
            .filter_map(Result::ok)
            .collect::<Vec<_>>();
        let Some(best) = step.iter().min_by(|a, b| rank(a, b)).cloned() else {
            break;
        };
        seen.extend(step);
        match &current {
            Some(c) if best.vic >= c.vic => break,
            _ => current = Some(best),
        }
    }
    Ok(seen)
}

/// Banded Toeplitz estimate of the error covariance `Γ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedCovariance {
    n: usize,
    band: usize,
    /// `γ̂_0, …, γ̂_band` after the definiteness correction.
    autocovariances: Vec<f64>,
    /// Amount added to `γ̂_0` to make the matrix positive definite.
    diagonal_shift: f64,
}

/// Frequencies used to bound the spectrum of a banded Toeplitz matrix.
const SPECTRAL_POINTS: usize = 4096;

/// Relative floor on the smallest eigenvalue of `Γ̂`.
const SPECTRAL_FLOOR: f64 = 1e-6;

/// `Γ̂[i][j] = γ̂_{|i−j|} 1{|i−j| ≤ band}` from demeaned sample
/// autocovariances (divisor `n`).
///
/// The eigenvalues of a banded Toeplitz matrix lie within the range of
/// `f(ω) = γ̂_0 + 2 Σ_k γ̂_k cos(kω)`; when the minimum of `f` falls below
/// `1e-6 · max f` the diagonal is raised by the difference, which keeps the
/// band structure intact.
pub fn banded_gamma(residuals: &[f64], band: usize) -> Result<BandedCovariance> {
    let n = residuals.len();
    if band >= n {
        return Err(Error::invalid(format!("band {band} must be smaller than n = {n}")));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let mut gamma: Vec<f64> = (0..=band)
        .map(|k| (0..n - k).map(|i| c[i] * c[i + k]).sum::<f64>() / n as f64)
        .collect();
    if !(gamma[0] > 0.0) {
        return Err(Error::numerical("residuals have zero variance"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in 0..=SPECTRAL_POINTS {
        let w = std::f64::consts::PI * s as f64 / SPECTRAL_POINTS as f64;
        let f = gamma[0]
            + 2.0
                * gamma[1..]
                    .iter()
                    .enumerate()
                    .map(|(k, g)| g * ((k + 1) as f64 * w).cos())
                    .sum::<f64>();
        lo = lo.min(f);
        hi = hi.max(f);
    }
    let floor = SPECTRAL_FLOOR * hi;
    let shift = if lo < floor { floor - lo } else { 0.0 };
    gamma[0] += shift;
    Ok(BandedCovariance {
        n,
        band,
        autocovariances: gamma,
        diagonal_shift: shift,
    })
}

impl BandedCovariance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn autocovariances(&self) -> &[f64] {
        &self.autocovariances
    }

    pub fn diagonal_shift(&self) -> f64 {
        self.diagonal_shift
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let k = i.abs_diff(j);
        if k <= self.band {
            self.autocovariances[k]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j))
    }

    /// Band Cholesky factor `L` with `L[i][k]` stored at `i * (band + 1) + (i − k)`.
    fn cholesky(&self) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.band);
        let w = m + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let start = i.saturating_sub(m);
            for j in start..=i {
                let mut s = self.entry(i, j);
                for k in start.max(j.saturating_sub(m))..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::numerical("banded covariance is not positive definite"));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(l)
    }

    /// `Γ̂⁻¹ r` by banded Cholesky.
    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.band);
        let w = m + 1;
        let l = self.cholesky()?;
        let mut z = self.forward(&l, r)?;
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..(i + m + 1).min(n) {
                s -= l[k * w + (k - i)] * z[k];
            }
            z[i] = s / l[i * w];
        }
        Ok(z)
    }

    fn forward(&self, l: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.band);
        if r.len() != n {
            return Err(Error::invalid("vector length does not match the covariance"));
        }
        let w = m + 1;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut s = r[i];
            for k in i.saturating_sub(m)..i {
                s -= l[i * w + (i - k)] * z[k];
            }
            z[i] = s / l[i * w];
        }
        Ok(z)
    }

    /// `rᵀ Γ̂⁻¹ r`.
    pub fn inverse_quadratic_form(&self, r: &[f64]) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(self.forward(&l, r)?.iter().map(|v| v * v).sum())
    }
}

/// Band from the lag rule applied to the residuals, capped at `⌊n^{1/2}⌋`.
pub fn residual_band(residuals: &[f64]) -> usize {
    let n = residuals.len();
    let l = DMatrix::from_column_slice(n, 1, residuals);
    select_truncation_lag(&l, default_lag_cap(n))
}

/// `Γ̂` from a pilot fit of `subset` at `b₀ = n^{-1/5}`.
pub fn pilot_gamma(data: &RegressionData, subset: &[usize], kernel: &Kernel) -> Result<BandedCovariance> {
    let b0 = (data.n() as f64).powf(-0.2);
    let (resid, _) = SubsetEvaluator::new(data, kernel, b0)?.residuals(subset)?;
    banded_gamma(resid.as_slice(), residual_band(resid.as_slice()))
}

fn gcv_ratio(resid: &DVector<f64>, trace: f64, gamma: &BandedCovariance) -> Result<f64> {
    let n = resid.len() as f64;
    let denom = 1.0 - trace / n;
    if !(denom > 0.0) {
        return Err(Error::numerical("hat-matrix trace reaches n"));
    }
    Ok(gamma.inverse_quadratic_form(resid.as_slice())? / n / (denom * denom))
}

/// `GCV(b) = n⁻¹ rᵀ Γ̂⁻¹ r / (1 − tr H(b)/n)²` for the fit on `subset`.
pub fn gcv(
    data: &RegressionData,
    subset: &[usize],
    kernel: &Kernel,
    b: f64,
    gamma: &BandedCovariance,
) -> Result<f64> {
    if gamma.n() != data.n() {
        return Err(Error::invalid("covariance size does not match the data"));
    }
    let (resid, trace) = SubsetEvaluator::new(data, kernel, b)?.residuals(subset)?;
    gcv_ratio(&resid, trace, gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvScan {
    pub bandwidths: Vec<f64>,
    /// NaN where the fit failed.
    pub scores: Vec<f64>,
    pub best: f64,
    pub refined: bool,
}

/// Minimizes GCV over `b_grid`, optionally refining by golden-section
/// search between the neighbours of the best grid value.
pub fn gcv_bandwidth(
    data: &RegressionData,
    subset: &[usize],
    kernel: &Kernel,
    b_grid: &[f64],
    gamma: &BandedCovariance,
    refine: bool,
) -> Result<GcvScan> {
    if b_grid.is_empty() {
        return Err(Error::invalid("bandwidth grid is empty"));
    }
    let eval = |b: f64| gcv(data, subset, kernel, b, gamma).ok().filter(|v| v.is_finite());
    let scores: Vec<f64> = b_grid
        .par_iter()
        .map(|&b| eval(b).unwrap_or(f64::NAN))
        .collect();
    let (k, _) = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_nan())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::numerical("GCV failed for every bandwidth"))?;
    let mut best = b_grid[k];
    if refine {
        let lo = if k > 0 { b_grid[k - 1] } else { best };
        let hi = if k + 1 < b_grid.len() { b_grid[k + 1] } else { best };
        if hi > lo {
            let cand = golden_section(|b| eval(b).unwrap_or(f64::INFINITY), lo, hi, 1e-4);
            if eval(cand).is_some_and(|v| v < scores[k]) {
                best = cand;
            }
        }
    }
    Ok(GcvScan {
        bandwidths: b_grid.to_vec(),
        scores,
        best,
        refined: refine,
    })
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStage {
    /// `b̃`: GCV choice with every column.
    pub pilot_bandwidth: f64,
    /// VIC choice at `b̃`.
    pub pilot_subset: Vec<usize>,
    /// `b̂`: GCV choice restricted to the pilot subset.
    pub final_bandwidth: f64,
    pub pilot_band: usize,
    pub final_band: usize,
}

/// Two-stage bandwidth: GCV with all columns gives `b̃`, VIC at `b̃` gives
/// a pilot subset, and GCV on that subset gives `b̂`. Each stage's `Γ̂` comes
/// from a pilot fit at `n^{-1/5}` of the columns in use. Both bandwidths
/// are members of `b_grid`.
pub fn two_stage_bandwidth(
    data: &RegressionData,
    kernel: &Kernel,
    chi: f64,
    b_grid: &[f64],
    search: Search,
) -> Result<TwoStage> {
    let all: Vec<usize> = (0..data.p()).collect();
    let gamma_all = pilot_gamma(data, &all, kernel)?;
    let pilot_bandwidth = gcv_bandwidth(data, &all, kernel, b_grid, &gamma_all, false)?.best;
    let pilot_subset = select_subset(data, kernel, pilot_bandwidth, chi, search)?.chosen;
    let (final_bandwidth, final_band) = if pilot_subset == all {
        (pilot_bandwidth, gamma_all.band())
    } else {
        let gamma = pilot_gamma(data, &pilot_subset, kernel)?;
        (
            gcv_bandwidth(data, &pilot_subset, kernel, b_grid, &gamma, false)?.best,
            gamma.band(),
        )
    };
    Ok(TwoStage {
        pilot_bandwidth,
        pilot_subset,
        final_bandwidth,
        pilot_band: gamma_all.band(),
        final_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn toy(n: usize, seed: u64) -> RegressionData {
        let mut r = rng::stream(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![1.0, rng::gaussian(&mut r), rng::gaussian(&mut r)])
            .collect();
        let y = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let t = (i + 1) as f64 / n as f64;
                (2.0 * t).sin() + 1.5 * row[1] + 0.3 * rng::gaussian(&mut r)
            })
            .collect();
        RegressionData::from_rows(y, &rows).unwrap()
    }

    #[test]
    fn forward_matches_exhaustive_on_toy() {
        let data = toy(200, 11);
        let k = Kernel::Epanechnikov;
        let chi = default_chi(200);
        let ex = select_subset(&data, &k, 0.25, chi, Search::Exhaustive).unwrap();
        let fw = select_subset(&data, &k, 0.25, chi, Search::Forward).unwrap();
        assert_eq!(ex.candidates.len(), 7);
        assert_eq!(ex.chosen, vec![0, 1]);
        assert_eq!(fw.chosen, ex.chosen);
        let brute = ex
            .candidates
            .iter()
            .min_by(|a, b| a.vic.partial_cmp(&b.vic).unwrap())
            .unwrap();
        assert_eq!(brute.subset, ex.chosen);
    }

    #[test]
    fn chi_default_at_730() {
        assert!((default_chi(730) - 0.072).abs() < 5e-4);
    }

    #[test]
    fn vic_rejects_zero_rss() {
        assert!(vic_from_rss(0.0, 1, 0.1).is_err());
        assert!(vic_from_rss(1.0, 2, 0.1).unwrap() > vic_from_rss(1.0, 1, 0.1).unwrap());
    }

    #[test]
    fn band_zero_is_diagonal_variance() {
        let r = [1.0, -2.0, 0.5, 0.5, 3.0, -1.0];
        let g = banded_gamma(&r, 0).unwrap();
        let mean = r.iter().sum::<f64>() / 6.0;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        let d = g.to_dense();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { var } else { 0.0 };
                assert!((d[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn banded_solve_matches_dense() {
        let mut r = rng::stream(2);
        let mut e = vec![0.0; 300];
        for i in 1..300 {
            e[i] = 0.6 * e[i - 1] + rng::gaussian(&mut r);
        }
        let g = banded_gamma(&e, 6).unwrap();
        let dense = g.to_dense();
        let rhs: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = g.solve(&rhs).unwrap();
        let back = &dense * DVector::from_vec(x);
        for i in 0..300 {
            assert!((back[i] - rhs[i]).abs() < 1e-8);
        }
        let chol = dense.cholesky().unwrap();
        let z = chol.solve(&DVector::from_vec(rhs.clone()));
        let dense_q = DVector::from_vec(rhs.clone()).dot(&z);
        assert!((g.inverse_quadratic_form(&rhs).unwrap() - dense_q).abs() < 1e-8 * dense_q);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|v| (v - 0.237).powi(2), 0.1, 0.4, 1e-8);
        assert!((x - 0.237).abs() < 1e-6);
    }

    #[test]
    fn gcv_scan_stays_on_grid() {
        let data = toy(150, 5);
        let all = [0, 1, 2];
        let gamma = pilot_gamma(&data, &all, &Kernel::Epanechnikov).unwrap();
        let grid = [0.1, 0.2, 0.3, 0.5];
        let scan = gcv_bandwidth(&data, &all, &Kernel::Epanechnikov, &grid, &gamma, false).unwrap();
        assert!(grid.contains(&scan.best));
        assert!(scan.scores.iter().all(|s| *s > 0.0));
    }
}
