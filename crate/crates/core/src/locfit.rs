//! Local linear estimation of the coefficient curve `β(t)` and its
//! derivative.
//!
//! At each grid point `t` the estimator solves the `2p×2p` system
//!
//! ```text
//! [U₀ U₁] [ β̃(t)   ]   [V₀]
//! [U₁ U₂] [ b β̃′(t) ] = [V₁]
//! ```
//!
//! with `U_l = (nb)⁻¹ Σ x_i x_iᵀ u_i^l K(u_i)`, `V_l = (nb)⁻¹ Σ x_i y_i u_i^l K(u_i)`
//! and `u_i = (i/n − t)/b`. The three blocks are accumulated once for all
//! columns ([`LocalMoments`]); any column subset is then solved from the
//! corresponding principal sub-blocks, which is what variable selection uses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceField;
use crate::data::{EvaluationGrid, RegressionData};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::SpdFactor;
use crate::normal;

/// Kernel values on the observations inside the support around `t`.
#[derive(Debug, Default, Clone)]
pub(crate) struct Window {
    /// Zero-based index of the first observation in the window.
    pub lo: usize,
    /// `K(u_i)` for consecutive observations.
    pub k: Vec<f64>,
    /// `u_i = (i/n − t)/b`.
    pub u: Vec<f64>,
}

impl Window {
    pub fn fill(&mut self, kernel: &Kernel, b: f64, t: f64, n: usize) {
        let nf = n as f64;
        let first = ((nf * (t - b)) - 1e-9).ceil().max(1.0) as usize;
        let last = ((nf * (t + b)) + 1e-9).floor().min(nf) as usize;
        self.k.clear();
        self.u.clear();
        self.lo = first - 1;
        for i in first..=last {
            let u = (i as f64 / nf - t) / b;
            self.u.push(u);
            self.k.push(kernel.eval(u));
        }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    /// Scalar local linear weights `ω_{i,b}(t)` over the window.
    pub fn local_linear_weights(&self, out: &mut Vec<f64>) -> Result<()> {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (&k, &u) in self.k.iter().zip(&self.u) {
            s0 += k;
            s1 += k * u;
            s2 += k * u * u;
        }
        let det = s0 * s2 - s1 * s1;
        if !(det > 1e-12 * s0 * s2) {
            return Err(Error::numerical(
                "degenerate local linear weights (too few points in the kernel window)",
            ));
        }
        out.clear();
        out.extend(
            self.k
                .iter()
                .zip(&self.u)
                .map(|(&k, &u)| k * (s2 - u * s1) / det),
        );
        Ok(())
    }
}

fn check_bandwidth(b: f64) -> Result<()> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::invalid(format!("bandwidth must lie in (0, 1), got {b}")));
    }
    Ok(())
}

/// The scalar local linear weights `ω_{i,b}(t)`, `i = 1..n`, as a full
/// vector (zero outside the kernel window).
pub fn local_linear_weights(kernel: &Kernel, b: f64, t: f64, n: usize) -> Result<Vec<f64>> {
    check_bandwidth(b)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t must lie in [0, 1], got {t}")));
    }
    let mut win = Window::default();
    win.fill(kernel, b, t, n);
    let mut w = Vec::new();
    win.local_linear_weights(&mut w)?;
    let mut full = vec![0.0; n];
    full[win.lo..win.lo + w.len()].copy_from_slice(&w);
    Ok(full)
}

/// Local linear smoothing of several series observed at `i/n`.
///
/// `series` holds one contiguous vector of length `n` per series; the result
/// holds one vector of length `G` per series.
pub(crate) fn smooth_series(
    series: &[Vec<f64>],
    kernel: &Kernel,
    b: f64,
    grid: &EvaluationGrid,
) -> Result<Vec<Vec<f64>>> {
    check_bandwidth(b)?;
    let n = series.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; grid.len()]; series.len()];
    let mut win = Window::default();
    let mut w = Vec::new();
    for (g, &t) in grid.points().iter().enumerate() {
        win.fill(kernel, b, t, n);
        win.local_linear_weights(&mut w)?;
        for (s, z) in series.iter().enumerate() {
            out[s][g] = dot(&w, &z[win.lo..win.lo + w.len()]);
        }
    }
    Ok(out)
}

/// Ordinary GCV score of the scalar local linear smoother applied jointly to
/// several series: `n⁻¹ Σ_s Σ_i (z_si − ẑ_si)² / (1 − tr S/n)²`.
pub(crate) fn smoother_gcv(series: &[Vec<f64>], kernel: &Kernel, b: f64) -> Result<f64> {
    check_bandwidth(b)?;
    let n = series.first().map_or(0, Vec::len);
    let nf = n as f64;
    let mut win = Window::default();
    let mut w = Vec::new();
    let mut rss = 0.0;
    let mut trace = 0.0;
    for i in 0..n {
        let t = (i + 1) as f64 / nf;
        win.fill(kernel, b, t, n);
        win.local_linear_weights(&mut w)?;
        trace += w[i - win.lo];
        for z in series {
            let fitted = dot(&w, &z[win.lo..win.lo + w.len()]);
            rss += (z[i] - fitted).powi(2);
        }
    }
    let denom = (1.0 - trace / nf).powi(2);
    if !(trace < nf) {
        return Err(Error::numerical("smoother trace reaches n"));
    }
    Ok(rss / nf / denom)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn tri_index(j: usize, k: usize, p: usize) -> usize {
    // Upper-triangular packed index for j <= k.
    j * p - j * (j + 1) / 2 + k
}

/// Kernel-weighted moment blocks `U₀, U₁, U₂, V₀, V₁` for every grid point.
#[derive(Debug, Clone)]
pub struct LocalMoments {
    n: usize,
    p: usize,
    bandwidth: f64,
    grid: EvaluationGrid,
    /// Per grid point: three packed upper triangles of length `p(p+1)/2`.
    u: Vec<f64>,
    /// Per grid point: `V₀` then `V₁`, each of length `p`.
    v: Vec<f64>,
    /// `K(0) / (nb)`, the diagonal hat-matrix factor.
    k0_nb: f64,
}

/// A local linear fit restricted to a column subset.
#[derive(Debug, Clone)]
pub(crate) struct SubsetFit {
    pub columns: Vec<usize>,
    /// `G × d`, row-major.
    pub beta: Vec<f64>,
    pub deriv: Vec<f64>,
    pub flags: Vec<bool>,
    /// Diagonal of the hat matrix, present for observation grids.
    pub hat_diag: Option<Vec<f64>>,
}

impl LocalMoments {
    pub fn new(
        data: &RegressionData,
        kernel: &Kernel,
        b: f64,
        grid: &EvaluationGrid,
    ) -> Result<Self> {
        check_bandwidth(b)?;
        let (n, p) = (data.n(), data.p());
        let tri = p * (p + 1) / 2;
        let x = data.x();
        let y = data.y();
        // Entry-major product tables so every window sum is a contiguous dot product.
        let mut prod = vec![vec![0.0; n]; tri];
        for j in 0..p {
            for k in j..p {
                let e = tri_index(j, k, p);
                for i in 0..n {
                    prod[e][i] = x[(i, j)] * x[(i, k)];
                }
            }
        }
        let xy: Vec<Vec<f64>> = (0..p)
            .map(|j| (0..n).map(|i| x[(i, j)] * y[i]).collect())
            .collect();

        let g = grid.len();
        let nb = n as f64 * b;
        let mut u = vec![0.0; g * 3 * tri];
        let mut v = vec![0.0; g * 2 * p];
        let mut win = Window::default();
        let (mut w0, mut w1, mut w2) = (Vec::new(), Vec::new(), Vec::new());
        for (gi, &t) in grid.points().iter().enumerate() {
            win.fill(kernel, b, t, n);
            w0.clear();
            w1.clear();
            w2.clear();
            for (&k, &uu) in win.k.iter().zip(&win.u) {
                let k = k / nb;
                w0.push(k);
                w1.push(k * uu);
                w2.push(k * uu * uu);
            }
            let range = win.lo..win.lo + win.len();
            let ub = &mut u[gi * 3 * tri..(gi + 1) * 3 * tri];
            for (e, col) in prod.iter().enumerate() {
                let c = &col[range.clone()];
                ub[e] = dot(&w0, c);
                ub[tri + e] = dot(&w1, c);
                ub[2 * tri + e] = dot(&w2, c);
            }
            let vb = &mut v[gi * 2 * p..(gi + 1) * 2 * p];
            for (j, col) in xy.iter().enumerate() {
                let c = &col[range.clone()];
                vb[j] = dot(&w0, c);
                vb[p + j] = dot(&w1, c);
            }
        }
        Ok(Self {
            n,
            p,
            bandwidth: b,
            grid: grid.clone(),
            u,
            v,
            k0_nb: kernel.eval(0.0) / nb,
        })
    }

    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn block(&self, gi: usize, l: usize, j: usize, k: usize) -> f64 {
        let tri = self.p * (self.p + 1) / 2;
        let (a, c) = if j <= k { (j, k) } else { (k, j) };
        self.u[gi * 3 * tri + l * tri + tri_index(a, c, self.p)]
    }

    /// Solves the local systems restricted to `columns`.
    pub(crate) fn solve(&self, data: &RegressionData, columns: &[usize]) -> Result<SubsetFit> {
        let d = columns.len();
        if d == 0 || columns.iter().any(|&c| c >= self.p) {
            return Err(Error::invalid("invalid column subset"));
        }
        let dd = 2 * d;
        let g = self.grid.len();
        let obs = self.grid.is_observation_grid(self.n);
        let mut beta = vec![f64::NAN; g * d];
        let mut deriv = vec![f64::NAN; g * d];
        let mut flags = vec![false; g];
        let mut hat = obs.then(|| vec![0.0; g]);
        let mut a = vec![0.0; dd * dd];
        let mut rhs = vec![0.0; dd];
        let x = data.x();
        for gi in 0..g {
            for (r, &cj) in columns.iter().enumerate() {
                for (c, &ck) in columns.iter().enumerate() {
                    let u0 = self.block(gi, 0, cj, ck);
                    let u1 = self.block(gi, 1, cj, ck);
                    let u2 = self.block(gi, 2, cj, ck);
                    a[r * dd + c] = u0;
                    a[r * dd + d + c] = u1;
                    a[(d + r) * dd + c] = u1;
                    a[(d + r) * dd + d + c] = u2;
                }
                rhs[r] = self.v[gi * 2 * self.p + cj];
                rhs[d + r] = self.v[gi * 2 * self.p + self.p + cj];
            }
            let Some(factor) = SpdFactor::new(&a, dd) else {
                flags[gi] = true;
                continue;
            };
            factor.solve_in_place(&mut rhs);
            for r in 0..d {
                beta[gi * d + r] = rhs[r];
                deriv[gi * d + r] = rhs[d + r] / self.bandwidth;
            }
            if let Some(h) = hat.as_mut() {
                rhs.iter_mut().for_each(|v| *v = 0.0);
                for (r, &cj) in columns.iter().enumerate() {
                    rhs[r] = x[(gi, cj)] * self.k0_nb;
                }
                factor.solve_in_place(&mut rhs);
                h[gi] = columns
                    .iter()
                    .enumerate()
                    .map(|(r, &cj)| x[(gi, cj)] * rhs[r])
                    .sum();
            }
        }
        if flags.iter().all(|&f| f) {
            return Err(Error::numerical(
                "local design matrix is singular at every grid point",
            ));
        }
        Ok(SubsetFit {
            columns: columns.to_vec(),
            beta,
            deriv,
            flags,
            hat_diag: hat,
        })
    }
}

impl SubsetFit {
    /// `β̃(t)` by linear interpolation between unflagged grid points,
    /// constant beyond the ends.
    pub fn beta_at(&self, grid: &EvaluationGrid, t: f64, out: &mut [f64]) {
        let d = self.columns.len();
        let pts = grid.points();
        let valid = |k: usize| !self.flags[k];
        let row = |k: usize| &self.beta[k * d..(k + 1) * d];
        let pos = pts.partition_point(|&p| p < t);
        if pos < pts.len() && pts[pos] == t && valid(pos) {
            out.copy_from_slice(row(pos));
            return;
        }
        let left = (0..pos).rev().find(|&k| valid(k));
        let right = (pos..pts.len()).find(|&k| valid(k));
        match (left, right) {
            (Some(l), Some(r)) => {
                let w = (t - pts[l]) / (pts[r] - pts[l]);
                for j in 0..d {
                    out[j] = (1.0 - w) * row(l)[j] + w * row(r)[j];
                }
            }
            (Some(k), None) | (None, Some(k)) => out.copy_from_slice(row(k)),
            (None, None) => out.iter_mut().for_each(|v| *v = f64::NAN),
        }
    }

    pub fn residuals(&self, data: &RegressionData, grid: &EvaluationGrid) -> DVector<f64> {
        let d = self.columns.len();
        let mut b = vec![0.0; d];
        let x = data.x();
        DVector::from_fn(data.n(), |i, _| {
            self.beta_at(grid, data.time(i), &mut b);
            let fitted: f64 = self
                .columns
                .iter()
                .zip(&b)
                .map(|(&c, bj)| x[(i, c)] * bj)
                .sum();
            data.y()[i] - fitted
        })
    }
}

/// Rows of the hat matrix `H(b)` on the observation grid, stored over each
/// kernel window: `ŷ_i = Σ_j h_ij y_j`.
#[derive(Debug, Clone)]
pub(crate) struct HatRows {
    lo: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl HatRows {
    pub fn new(data: &RegressionData, kernel: &Kernel, b: f64) -> Result<Self> {
        check_bandwidth(b)?;
        let (n, p) = (data.n(), data.p());
        let x = data.x();
        let dd = 2 * p;
        let nb = n as f64 * b;
        let mut win = Window::default();
        let mut a = vec![0.0; dd * dd];
        let mut c = vec![0.0; dd];
        let mut lo = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            win.fill(kernel, b, (i + 1) as f64 / n as f64, n);
            a.iter_mut().for_each(|v| *v = 0.0);
            for (r, (&k, &u)) in win.k.iter().zip(&win.u).enumerate() {
                let j = win.lo + r;
                let k = k / nb;
                for q in 0..p {
                    for s in 0..p {
                        let v = x[(j, q)] * x[(j, s)] * k;
                        a[q * dd + s] += v;
                        a[q * dd + p + s] += v * u;
                        a[(p + q) * dd + s] += v * u;
                        a[(p + q) * dd + p + s] += v * u * u;
                    }
                }
            }
            let factor = SpdFactor::new(&a, dd).ok_or_else(|| {
                Error::numerical(format!("local design singular at observation {}", i + 1))
            })?;
            c.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..p {
                c[q] = x[(i, q)];
            }
            factor.solve_in_place(&mut c);
            let row = win
                .k
                .iter()
                .zip(&win.u)
                .enumerate()
                .map(|(r, (&k, &u))| {
                    let j = win.lo + r;
                    (0..p)
                        .map(|q| x[(j, q)] * (c[q] + c[p + q] * u))
                        .sum::<f64>()
                        * k
                        / nb
                })
                .collect();
            lo.push(win.lo);
            rows.push(row);
        }
        Ok(Self { lo, rows })
    }

    pub fn fitted(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.lo)
            .map(|(row, &lo)| dot(row, &y[lo..lo + row.len()]))
            .collect()
    }

    #[cfg(test)]
    pub fn trace(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.lo)
            .enumerate()
            .map(|(i, (row, &lo))| row[i - lo])
            .sum()
    }
}

/// Result of [`local_linear_fit`].
#[derive(Debug, Clone)]
pub struct LocalLinearFit {
    grid: EvaluationGrid,
    beta: DMatrix<f64>,
    beta_deriv: DMatrix<f64>,
    bandwidth: f64,
    residuals: DVector<f64>,
    hat_trace: f64,
    singular_flags: Vec<bool>,
    kernel: Kernel,
    column_names: Vec<String>,
}

impl LocalLinearFit {
    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }
    /// `G × p`; rows at singular grid points are NaN.
    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }
    pub fn beta_deriv(&self) -> &DMatrix<f64> {
        &self.beta_deriv
    }
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }
    pub fn hat_trace(&self) -> f64 {
        self.hat_trace
    }
    pub fn singular_flags(&self) -> &[bool] {
        &self.singular_flags
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }
    pub fn n(&self) -> usize {
        self.residuals.len()
    }
    pub fn p(&self) -> usize {
        self.beta.ncols()
    }
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }

    /// Trapezoid weights over unflagged grid points.
    pub fn integration_weights(&self) -> Result<Vec<f64>> {
        self.grid.masked_weights(&self.singular_flags)
    }
}

/// Local linear fit of `β(·)` on `grid` with bandwidth `b`.
pub fn local_linear_fit(
    data: &RegressionData,
    kernel: &Kernel,
    b: f64,
    grid: &EvaluationGrid,
) -> Result<LocalLinearFit> {
    let moments = LocalMoments::new(data, kernel, b, grid)?;
    let all: Vec<usize> = (0..data.p()).collect();
    let sub = moments.solve(data, &all)?;
    let residuals = sub.residuals(data, grid);
    let hat_trace = match &sub.hat_diag {
        Some(h) => h.iter().sum(),
        None => {
            let obs = EvaluationGrid::observation(data.n())?;
            let at_obs = LocalMoments::new(data, kernel, b, &obs)?.solve(data, &all)?;
            at_obs.hat_diag.map_or(0.0, |h| h.iter().sum())
        }
    };
    let (g, p) = (grid.len(), data.p());
    Ok(LocalLinearFit {
        grid: grid.clone(),
        beta: DMatrix::from_row_slice(g, p, &sub.beta),
        beta_deriv: DMatrix::from_row_slice(g, p, &sub.deriv),
        bandwidth: b,
        residuals,
        hat_trace,
        singular_flags: sub.flags,
        kernel: kernel.clone(),
        column_names: data.column_names().to_vec(),
    })
}

fn check_a_matrix(fit: &LocalLinearFit, a: &DMatrix<f64>) -> Result<()> {
    if a.ncols() != fit.p() || a.nrows() == 0 {
        return Err(Error::invalid(format!(
            "hypothesis matrix is {}×{}, expected s×{}",
            a.nrows(),
            a.ncols(),
            fit.p()
        )));
    }
    Ok(())
}

/// `â = ∫₀¹ A β̃(t) dt` by the trapezoid rule over unflagged grid points.
pub fn integrate_coefficients(fit: &LocalLinearFit, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_a_matrix(fit, a)?;
    let w = fit.integration_weights()?;
    let mut mean = DVector::zeros(fit.p());
    for (k, wk) in w.iter().enumerate() {
        if *wk != 0.0 {
            mean += fit.beta.row(k).transpose() * *wk;
        }
    }
    Ok(a * mean)
}

/// Asymptotic confidence interval for one component of `â`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub std_error: f64,
    /// `b² κ₂ / 2 · ∫ A β̃″`, reported for diagnosis only; it vanishes under
    /// the null and is not subtracted from the estimate.
    pub bias_diagnostic: f64,
}

/// Normal-theory intervals `â ± z_{1−α/2} (diag ∫ A Ξ̂ Aᵀ / n)^{1/2}`.
pub fn parametric_confidence_intervals(
    fit: &LocalLinearFit,
    a: &DMatrix<f64>,
    field: &CovarianceField,
    level: f64,
) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {level}")));
    }
    check_a_matrix(fit, a)?;
    if field.grid() != fit.grid() {
        return Err(Error::invalid("covariance field and fit use different grids"));
    }
    let estimate = integrate_coefficients(fit, a)?;
    let mut flags = fit.singular_flags.clone();
    for (f, g) in flags.iter_mut().zip(field.flags()) {
        *f |= *g;
    }
    let w = fit.grid.masked_weights(&flags)?;
    let s = a.nrows();
    let mut cov = DMatrix::zeros(s, s);
    for (k, wk) in w.iter().enumerate() {
        if *wk != 0.0 {
            cov += a * field.xi(k) * a.transpose() * *wk;
        }
    }
    if cov.clone().cholesky().is_none() {
        return Err(Error::numerical(
            "integrated covariance A Ξ Aᵀ is not positive definite",
        ));
    }
    let n = fit.n() as f64;
    let z = normal::quantile(0.5 + level / 2.0);
    let bias = bias_diagnostic(fit, a, &w)?;
    Ok((0..s)
        .map(|r| {
            let se = (cov[(r, r)] / n).sqrt();
            ConfidenceInterval {
                estimate: estimate[r],
                lower: estimate[r] - z * se,
                upper: estimate[r] + z * se,
                std_error: se,
                bias_diagnostic: bias[r],
            }
        })
        .collect())
}

fn bias_diagnostic(fit: &LocalLinearFit, a: &DMatrix<f64>, w: &[f64]) -> Result<DVector<f64>> {
    let kappa2 = fit.kernel.default_constants()?.kappa2;
    let pts = fit.grid.points();
    let g = pts.len();
    let mut second = DVector::zeros(fit.p());
    for k in 0..g {
        let (l, r) = (k.saturating_sub(1), (k + 1).min(g - 1));
        if w[k] == 0.0 || fit.singular_flags[l] || fit.singular_flags[r] || l == r {
            continue;
        }
        let slope = (fit.beta_deriv.row(r) - fit.beta_deriv.row(l)) / (pts[r] - pts[l]);
        second += slope.transpose() * w[k];
    }
    Ok(a * second * (fit.bandwidth.powi(2) * kappa2 / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_data(n: usize) -> RegressionData {
        let rows: Vec<Vec<f64>> = (1..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                vec![1.0, (7.0 * t).sin() + 0.3 * (i as f64 * 1.7).cos()]
            })
            .collect();
        let y = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t = (i + 1) as f64 / n as f64;
                r[0] * (1.0 + 2.0 * t) + r[1] * (-0.5 + 0.25 * t)
            })
            .collect();
        RegressionData::from_rows(y, &rows).unwrap()
    }

    #[test]
    fn weights_reproduce_constants_and_lines() {
        for &(b, t, n) in &[(0.3, 0.5, 50), (0.1, 0.02, 200), (0.25, 1.0, 80)] {
            let w = local_linear_weights(&Kernel::Epanechnikov, b, t, n).unwrap();
            let s: f64 = w.iter().sum();
            let lin: f64 = w
                .iter()
                .enumerate()
                .map(|(i, wi)| wi * (t - (i + 1) as f64 / n as f64))
                .sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(lin.abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_weights_error() {
        // A bandwidth below 1/n leaves a single point in the window.
        assert!(local_linear_weights(&Kernel::Epanechnikov, 0.001, 0.5, 50).is_err());
    }

    #[test]
    fn reproduces_affine_coefficients() {
        let data = affine_data(200);
        let grid = EvaluationGrid::observation(200).unwrap();
        let fit = local_linear_fit(&data, &Kernel::Epanechnikov, 0.2, &grid).unwrap();
        for (k, &t) in grid.points().iter().enumerate() {
            assert!((fit.beta()[(k, 0)] - (1.0 + 2.0 * t)).abs() < 1e-8);
            assert!((fit.beta()[(k, 1)] - (-0.5 + 0.25 * t)).abs() < 1e-8);
            assert!((fit.beta_deriv()[(k, 0)] - 2.0).abs() < 1e-6);
        }
        assert!(fit.residuals().amax() < 1e-8);
        assert!(fit.hat_trace() > 0.0 && fit.hat_trace() < 200.0);
    }

    #[test]
    fn constant_coefficients_integrate_exactly() {
        let data = affine_data(100);
        let y = data.x() * DVector::from_vec(vec![0.7, -1.2]);
        let data = data.with_response(y).unwrap();
        let grid = EvaluationGrid::observation(100).unwrap();
        let fit = local_linear_fit(&data, &Kernel::Bartlett, 0.3, &grid).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let ahat = integrate_coefficients(&fit, &a).unwrap();
        assert!((ahat[0] - 0.7).abs() < 1e-9);
        assert!((ahat[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn off_grid_residuals_interpolate() {
        let data = affine_data(120);
        let grid = EvaluationGrid::uniform(40).unwrap();
        let fit = local_linear_fit(&data, &Kernel::Epanechnikov, 0.25, &grid).unwrap();
        // β is affine in t, so linear interpolation is exact between grid
        // points; before the first point the constant extension is not.
        for i in 2..120 {
            assert!(fit.residuals()[i].abs() < 1e-8, "i={i}");
        }
        assert!(fit.hat_trace() > 0.0);
    }

    #[test]
    fn hat_rows_agree_with_fit() {
        let data = affine_data(90);
        let noisy: Vec<f64> = (0..90)
            .map(|i| data.y()[i] + ((i * 13 % 7) as f64 - 3.0) * 0.1)
            .collect();
        let data = data.with_response(DVector::from_vec(noisy.clone())).unwrap();
        let grid = EvaluationGrid::observation(90).unwrap();
        let fit = local_linear_fit(&data, &Kernel::Epanechnikov, 0.3, &grid).unwrap();
        let hat = HatRows::new(&data, &Kernel::Epanechnikov, 0.3).unwrap();
        let fitted = hat.fitted(&noisy);
        for i in 0..90 {
            assert!((noisy[i] - fitted[i] - fit.residuals()[i]).abs() < 1e-9);
        }
        assert!((hat.trace() - fit.hat_trace()).abs() < 1e-9);
    }

    #[test]
    fn singular_design_errors() {
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![1.0, 2.0]).collect();
        let data = RegressionData::from_rows(vec![1.0; 40], &rows).unwrap();
        let grid = EvaluationGrid::observation(40).unwrap();
        assert!(local_linear_fit(&data, &Kernel::Epanechnikov, 0.3, &grid).is_err());
    }
}
