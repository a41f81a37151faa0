//! The weighted L² statistic `T_n`, its studentized form `Δ_n`, critical
//! values (asymptotic or simulation-assisted), predicted power, and the
//! generalized likelihood ratio baseline.
//!
//! ```text
//! T_n = ∫ (A β̃(t) − a)ᵀ W(t) (A β̃(t) − a) dt
//! Δ_n = n b^{1/2} {T_n − (nb)⁻¹ K*(0) Ξ_{A,W,1}} / (4 K*₂ Ξ_{A,W,2})^{1/2}
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{estimate_covariance_field, xi_functional, CovarianceField, CovarianceOptions};
use crate::data::{EvaluationGrid, RegressionData};
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, Target, WeightScheme};
use crate::kernels::{Kernel, KernelConstants};
use crate::linalg;
use crate::locfit::{local_linear_fit, HatRows, LocalLinearFit};
use crate::normal;
use crate::rng;

/// Smallest number of calibration or bootstrap replicates accepted.
pub const MIN_REPLICATES: usize = 200;

/// Largest tolerated fraction of failed calibration replicates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Everything the statistic depends on besides the data and hypothesis.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub kernel: Kernel,
    pub bandwidth: f64,
    /// `None` evaluates on the observation grid `i/n`.
    pub grid_size: Option<usize>,
    pub covariance: CovarianceOptions,
}

impl PipelineConfig {
    pub fn new(kernel: Kernel, bandwidth: f64) -> Self {
        Self {
            kernel,
            bandwidth,
            grid_size: None,
            covariance: CovarianceOptions::default(),
        }
    }

    pub fn grid(&self, n: usize) -> Result<EvaluationGrid> {
        match self.grid_size {
            Some(g) => EvaluationGrid::uniform(g),
            None => EvaluationGrid::observation(n),
        }
    }
}

/// `W(t)` on the field's grid. Points flagged in the field carry the
/// identity as a placeholder; they receive zero integration weight.
pub fn weight_field(
    scheme: WeightScheme,
    a: &DMatrix<f64>,
    field: &CovarianceField,
) -> Result<Vec<DMatrix<f64>>> {
    let s = a.nrows();
    (0..field.grid().len())
        .map(|k| {
            if field.flags()[k] {
                return Ok(DMatrix::identity(s, s));
            }
            match scheme {
                WeightScheme::Identity => Ok(DMatrix::identity(s, s)),
                WeightScheme::Normalizer => {
                    linalg::spd_inverse(&linalg::symmetrize(&(a * field.xi(k) * a.transpose())))
                        .map_err(|e| {
                            Error::numerical(format!(
                                "normalizer weight not invertible at t = {}: {e}",
                                field.grid().points()[k]
                            ))
                        })
                }
                WeightScheme::Prediction => {
                    Ok(linalg::symmetrize(&(a * field.m(k) * a.transpose())))
                }
            }
        })
        .collect()
}

/// `T_n` by quadrature with the given per-point weights (zero skips a point).
pub fn compute_tn(
    fit: &LocalLinearFit,
    a: &DMatrix<f64>,
    target: &DVector<f64>,
    w: &[DMatrix<f64>],
    weights: &[f64],
) -> Result<f64> {
    if a.ncols() != fit.p() || target.len() != a.nrows() {
        return Err(Error::invalid("hypothesis dimensions do not match the fit"));
    }
    if w.len() != fit.grid().len() || weights.len() != fit.grid().len() {
        return Err(Error::invalid("weight field does not match the fit grid"));
    }
    let mut total = 0.0;
    for (k, &wk) in weights.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        let dev = a * fit.beta().row(k).transpose() - target;
        total += wk * (dev.transpose() * &w[k] * &dev)[(0, 0)];
    }
    Ok(total)
}

/// Centering `(nb)⁻¹ K*(0) Ξ₁` and scale `(4 K*₂ Ξ₂)^{1/2}`.
pub fn centering_and_scale(
    n: usize,
    b: f64,
    constants: &KernelConstants,
    xi1: f64,
    xi2: f64,
) -> Result<(f64, f64)> {
    if !(xi2 > 0.0) {
        return Err(Error::numerical(format!(
            "Ξ_(A,W,2) must be positive, got {xi2}"
        )));
    }
    let centering = constants.kstar_at0 * xi1 / (n as f64 * b);
    let scale = (4.0 * constants.kstar2 * xi2).sqrt();
    Ok((centering, scale))
}

/// `Δ_n` from its ingredients.
pub fn studentize(
    tn: f64,
    n: usize,
    b: f64,
    constants: &KernelConstants,
    xi1: f64,
    xi2: f64,
) -> Result<f64> {
    let (centering, scale) = centering_and_scale(n, b, constants, xi1, xi2)?;
    Ok(n as f64 * b.sqrt() * (tn - centering) / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub critical_value: f64,
    pub reject: bool,
    pub p_value: f64,
}

/// One-sided normal decision: reject iff `Δ > q_{1−α}`.
pub fn asymptotic_decision(delta: f64, alpha: f64) -> Result<Decision> {
    check_alpha(alpha)?;
    let critical_value = normal::quantile(1.0 - alpha);
    Ok(Decision {
        critical_value,
        reject: delta > critical_value,
        p_value: normal::sf(delta),
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// The pieces of `Δ_n` for one weight scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaComponents {
    pub scheme: WeightScheme,
    pub tn: f64,
    pub centering: f64,
    pub scale: f64,
    pub delta: f64,
    pub xi1: f64,
    pub xi2: f64,
}

/// Output of the full statistic pipeline on one dataset.
#[derive(Debug, Clone)]
pub struct DeltaEvaluation {
    /// The value of `a` used: fixed, or `â = ∫ A β̃`.
    pub target: DVector<f64>,
    pub components: Vec<DeltaComponents>,
    pub fit: LocalLinearFit,
    pub field: CovarianceField,
}

impl DeltaEvaluation {
    pub fn component(&self, scheme: WeightScheme) -> Option<&DeltaComponents> {
        self.components.iter().find(|c| c.scheme == scheme)
    }
}

/// Fit, covariance plug-in, and `Δ_n` for each requested scheme.
///
/// Integrals skip grid points flagged either by the fit or by the
/// covariance field.
pub fn evaluate_delta(
    data: &RegressionData,
    a: &DMatrix<f64>,
    target: &Target,
    schemes: &[WeightScheme],
    config: &PipelineConfig,
) -> Result<DeltaEvaluation> {
    if a.ncols() != data.p() {
        return Err(Error::invalid(format!(
            "hypothesis matrix has {} columns, data has {}",
            a.ncols(),
            data.p()
        )));
    }
    let grid = config.grid(data.n())?;
    let fit = local_linear_fit(data, &config.kernel, config.bandwidth, &grid)?;
    let field = estimate_covariance_field(data, &fit, &config.kernel, &config.covariance)?;
    let flags: Vec<bool> = fit
        .singular_flags()
        .iter()
        .zip(field.flags())
        .map(|(a, b)| *a || *b)
        .collect();
    let weights = grid.masked_weights(&flags)?;
    let target = match target {
        Target::Fixed(v) => v.clone(),
        Target::Estimate => {
            let mut mean = DVector::zeros(data.p());
            for (k, &wk) in weights.iter().enumerate() {
                if wk != 0.0 {
                    mean += fit.beta().row(k).transpose() * wk;
                }
            }
            a * mean
        }
    };
    let constants = config.kernel.default_constants()?;
    let components = schemes
        .iter()
        .map(|&scheme| {
            let w = weight_field(scheme, a, &field)?;
            let tn = compute_tn(&fit, a, &target, &w, &weights)?;
            let xi1 = xi_functional(field.xi_field(), a, &w, &weights, 1)?;
            let xi2 = xi_functional(field.xi_field(), a, &w, &weights, 2)?;
            let (centering, scale) =
                centering_and_scale(data.n(), config.bandwidth, &constants, xi1, xi2)?;
            let delta = data.n() as f64 * config.bandwidth.sqrt() * (tn - centering) / scale;
            Ok(DeltaComponents {
                scheme,
                tn,
                centering,
                scale,
                delta,
                xi1,
                xi2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeltaEvaluation {
        target,
        components,
        fit,
        field,
    })
}

/// Sorted replicates of a null statistic with order-statistic quantiles and
/// Monte Carlo p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNull {
    samples: Vec<f64>,
}

impl EmpiricalNull {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("null sample must be non-empty and finite"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `q̂_{1−α}`: the `⌈(1−α)B⌉`-th order statistic.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let b = self.samples.len();
        let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
        Ok(self.samples[k - 1])
    }

    /// `(1 + #{T° ≥ T}) / (B + 1)`.
    pub fn p_value(&self, stat: f64) -> f64 {
        let below = self.samples.partition_point(|&v| v < stat);
        (1 + self.samples.len() - below) as f64 / (self.samples.len() + 1) as f64
    }

    pub fn decision(&self, stat: f64, alpha: f64) -> Result<Decision> {
        let critical_value = self.quantile(alpha)?;
        Ok(Decision {
            critical_value,
            reject: stat > critical_value,
            p_value: self.p_value(stat),
        })
    }
}

/// Simulated null distributions of `Δ_n°`, one per weight scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullCalibration {
    pub schemes: Vec<WeightScheme>,
    pub distributions: Vec<EmpiricalNull>,
    pub requested: usize,
    pub failures: usize,
    pub seed: u64,
}

impl NullCalibration {
    pub fn distribution(&self, scheme: WeightScheme) -> Result<&EmpiricalNull> {
        self.schemes
            .iter()
            .position(|&s| s == scheme)
            .map(|k| &self.distributions[k])
            .ok_or_else(|| Error::invalid(format!("scheme {scheme} was not calibrated")))
    }
}

/// Pure-noise dataset for calibration replicate `index`: `y° ~ N(0, 1)` and
/// `x° ~ N(0, I_p)`, both i.i.d. over time.
pub fn null_dataset(n: usize, p: usize, seed: u64, index: u64) -> Result<RegressionData> {
    let mut r = rng::stream(rng::derive_seed(seed, "null", index));
    let y = DVector::from_fn(n, |_, _| rng::gaussian(&mut r));
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = rng::gaussian(&mut r);
        }
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    RegressionData::new(y, x, names)
}

/// Runs `nsim` replicates of the full pipeline on pure-noise data with the
/// same `n`, `p`, hypothesis shape and configuration.
///
/// A fixed target is mirrored as `a = 0`, the true value under the noise
/// model; an estimated target is re-estimated in every replicate.
/// Replicates are seeded by index, so the result does not depend on
/// scheduling.
pub fn simulate_null(
    n: usize,
    a: &DMatrix<f64>,
    target: &Target,
    schemes: &[WeightScheme],
    config: &PipelineConfig,
    nsim: usize,
    seed: u64,
) -> Result<NullCalibration> {
    if nsim < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "simulated calibration needs at least {MIN_REPLICATES} replicates, got {nsim}"
        )));
    }
    if schemes.is_empty() {
        return Err(Error::invalid("no weight scheme requested"));
    }
    let null_target = match target {
        Target::Fixed(_) => Target::Fixed(DVector::zeros(a.nrows())),
        Target::Estimate => Target::Estimate,
    };
    let p = a.ncols();
    let outcomes: Vec<Result<Vec<f64>>> = (0..nsim)
        .into_par_iter()
        .map(|r| {
            let data = null_dataset(n, p, seed, r as u64)?;
            let eval = evaluate_delta(&data, a, &null_target, schemes, config)?;
            let deltas: Vec<f64> = eval.components.iter().map(|c| c.delta).collect();
            if deltas.iter().all(|d| d.is_finite()) {
                Ok(deltas)
            } else {
                Err(Error::numerical("non-finite Δ°"))
            }
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    if failures as f64 > MAX_FAILURE_RATE * nsim as f64 {
        let (index, err) = outcomes
            .into_iter()
            .enumerate()
            .find_map(|(i, o)| o.err().map(|e| (i, e)))
            .expect("at least one failure");
        return Err(Error::Replicate {
            index,
            source: Box::new(Error::numerical(format!(
                "{failures} of {nsim} calibration replicates failed; first: {err}"
            ))),
        });
    }
    let mut columns = vec![Vec::with_capacity(nsim); schemes.len()];
    for deltas in outcomes.into_iter().flatten() {
        for (col, d) in columns.iter_mut().zip(deltas) {
            col.push(d);
        }
    }
    Ok(NullCalibration {
        schemes: schemes.to_vec(),
        distributions: columns
            .into_iter()
            .map(EmpiricalNull::new)
            .collect::<Result<_>>()?,
        requested: nsim,
        failures,
        seed,
    })
}

/// Asymptotic power `Φ{q_α + s ∫ fᵀ W f / (4 K*₂ Ξ₂)^{1/2}}` against the
/// local alternative `A β(t) = a + d_n f(t)`, where `s = n b^{1/2} d_n²`.
#[allow(clippy::too_many_arguments)]
pub fn predicted_power(
    f: &DMatrix<f64>,
    w: &[DMatrix<f64>],
    weights: &[f64],
    d_n: f64,
    n: usize,
    b: f64,
    constants: &KernelConstants,
    xi2: f64,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !(xi2 > 0.0) {
        return Err(Error::numerical("Ξ_(A,W,2) must be positive"));
    }
    if f.nrows() != w.len() || weights.len() != w.len() {
        return Err(Error::invalid("alternative and weight field differ in length"));
    }
    let s_lim = n as f64 * b.sqrt() * d_n * d_n;
    let mut integral = 0.0;
    for (k, &wk) in weights.iter().enumerate() {
        if wk != 0.0 {
            let fk = f.row(k).transpose();
            integral += wk * (fk.transpose() * &w[k] * &fk)[(0, 0)];
        }
    }
    let shift = s_lim * integral / (4.0 * constants.kstar2 * xi2).sqrt();
    Ok(normal::cdf(normal::quantile(alpha) + shift))
}

fn ols(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if linalg::rank(x) < x.ncols() {
        return Err(Error::numerical("least-squares design is rank deficient"));
    }
    Ok(x.clone().qr().q())
}

fn projection_rss(q: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let coef = q.transpose() * y;
    (y - q * coef).norm_squared()
}

/// `T_GLR = (n/2) log(RSS₀/RSS₁)` with `RSS₀` from ordinary least squares on
/// the full design and `RSS₁` from the local linear fit.
pub fn glrt_statistic(data: &RegressionData, fit: &LocalLinearFit) -> Result<f64> {
    let rss1 = fit.rss();
    if !(rss1 > 0.0) {
        return Err(Error::numerical("RSS of the local fit is zero"));
    }
    let rss0 = projection_rss(&ols(data.x())?, data.y());
    Ok(data.n() as f64 / 2.0 * (rss0 / rss1).ln())
}

/// GLR statistic with its conditional-bootstrap null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlrtCalibration {
    pub statistic: f64,
    pub null: EmpiricalNull,
    pub sigma2: f64,
}

/// Conditional bootstrap: `y° = xᵀ β̆ + e°` with `e° ~ N(0, RSS₁/n)` and
/// `β̆` the least-squares estimate. Fits are on the observation grid.
pub fn glrt_bootstrap(
    data: &RegressionData,
    kernel: &Kernel,
    b: f64,
    nsim: usize,
    seed: u64,
) -> Result<GlrtCalibration> {
    if nsim < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {nsim}"
        )));
    }
    let n = data.n();
    let hat = HatRows::new(data, kernel, b)?;
    let q = ols(data.x())?;
    let rss1_of = |y: &[f64]| -> f64 {
        let fitted = hat.fitted(y);
        y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum()
    };
    let y = data.y();
    let rss1 = rss1_of(y.as_slice());
    if !(rss1 > 0.0) {
        return Err(Error::numerical("RSS of the local fit is zero"));
    }
    let statistic = n as f64 / 2.0 * (projection_rss(&q, y) / rss1).ln();
    let fitted0 = &q * (q.transpose() * y);
    let sigma = (rss1 / n as f64).sqrt();
    let outcomes: Vec<Result<f64>> = (0..nsim)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(rng::derive_seed(seed, "glrt", r as u64));
            let ystar = DVector::from_fn(n, |i, _| fitted0[i] + sigma * rng::gaussian(&mut g));
            let r1 = rss1_of(ystar.as_slice());
            if !(r1 > 0.0) {
                return Err(Error::numerical("bootstrap RSS of the local fit is zero"));
            }
            Ok(n as f64 / 2.0 * (projection_rss(&q, &ystar) / r1).ln())
        })
        .collect();
    let samples = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, o)| o.map_err(|e| Error::Replicate { index: i, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(GlrtCalibration {
        statistic,
        null: EmpiricalNull::new(samples)?,
        sigma2: sigma * sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalSource {
    Asymptotic,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Calibration {
    Asymptotic,
    Simulated { nsim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub scheme: WeightScheme,
    #[serde(rename = "Tn")]
    pub tn: f64,
    pub centering: f64,
    pub scale: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub target: Vec<f64>,
    pub alpha: f64,
    pub critical_value: f64,
    pub critical_source: CriticalSource,
    pub p_value: f64,
    pub reject: bool,
    pub n_sim: usize,
    pub seed: u64,
    pub bandwidth: f64,
    pub truncation_lag: usize,
}

/// Tests one hypothesis under several weight schemes, sharing the fit, the
/// covariance plug-in and the calibration replicates.
pub fn run_tests(
    data: &RegressionData,
    a: &DMatrix<f64>,
    target: &Target,
    schemes: &[WeightScheme],
    config: &PipelineConfig,
    calibration: Calibration,
    alpha: f64,
) -> Result<Vec<TestReport>> {
    check_alpha(alpha)?;
    let eval = evaluate_delta(data, a, target, schemes, config)?;
    let null = match calibration {
        Calibration::Asymptotic => None,
        Calibration::Simulated { nsim, seed } => {
            Some(simulate_null(data.n(), a, target, schemes, config, nsim, seed)?)
        }
    };
    eval.components
        .iter()
        .map(|c| {
            let (decision, source, n_sim, seed) = match (&null, calibration) {
                (Some(cal), Calibration::Simulated { nsim, seed }) => (
                    cal.distribution(c.scheme)?.decision(c.delta, alpha)?,
                    CriticalSource::Simulated,
                    nsim,
                    seed,
                ),
                _ => (
                    asymptotic_decision(c.delta, alpha)?,
                    CriticalSource::Asymptotic,
                    0,
                    0,
                ),
            };
            Ok(TestReport {
                scheme: c.scheme,
                tn: c.tn,
                centering: c.centering,
                scale: c.scale,
                delta: c.delta,
                xi1: c.xi1,
                xi2: c.xi2,
                target: eval.target.iter().copied().collect(),
                alpha,
                critical_value: decision.critical_value,
                critical_source: source,
                p_value: decision.p_value,
                reject: decision.reject,
                n_sim,
                seed,
                bandwidth: config.bandwidth,
                truncation_lag: eval.field.truncation_lag(),
            })
        })
        .collect()
}

pub fn run_test(
    data: &RegressionData,
    hypothesis: &Hypothesis,
    config: &PipelineConfig,
    calibration: Calibration,
    alpha: f64,
) -> Result<TestReport> {
    let mut reports = run_tests(
        data,
        hypothesis.a(),
        hypothesis.target(),
        &[hypothesis.weights()],
        config,
        calibration,
        alpha,
    )?;
    Ok(reports.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{Bandwidth, LagChoice};
    use crate::locfit::local_linear_fit;

    fn epa() -> KernelConstants {
        Kernel::Epanechnikov.default_constants().unwrap()
    }

    #[test]
    fn studentize_instance() {
        // n b^{1/2} (T − K*(0)/(nb)) / (4 K*₂)^{1/2} with K*(0) = 3/5, K*₂ = 167/770.
        let expected = 100.0 * 0.5 * (0.1 - 0.6 / 25.0) / (4.0 * 167.0 / 770.0f64).sqrt();
        let got = studentize(0.1, 100, 0.25, &epa(), 1.0, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-9);
        assert!((got - 4.079817419890347).abs() < 1e-9);
        assert_eq!(studentize(0.024, 100, 0.25, &epa(), 1.0, 1.0).unwrap().abs() < 1e-12, true);
        assert!(studentize(0.1, 100, 0.25, &epa(), 1.0, 0.0).is_err());
    }

    #[test]
    fn decisions_are_strict() {
        let d = asymptotic_decision(0.3, 0.5).unwrap();
        assert!(d.critical_value.abs() < 1e-12);
        let q = normal::quantile(0.95);
        assert!(!asymptotic_decision(q, 0.05).unwrap().reject);
        assert!(asymptotic_decision(q + 1e-9, 0.05).unwrap().reject);
        assert!(asymptotic_decision(0.0, 1.0).is_err());
    }

    #[test]
    fn empirical_quantiles_and_p_values() {
        let null = EmpiricalNull::new((1..=200).map(|v| v as f64).collect()).unwrap();
        assert_eq!(null.quantile(0.10).unwrap(), 180.0);
        assert_eq!(null.quantile(0.05).unwrap(), 190.0);
        assert_eq!(null.p_value(1000.0), 1.0 / 201.0);
        assert_eq!(null.p_value(-1.0), 1.0);
        assert_eq!(null.p_value(200.0), 2.0 / 201.0);
        let d = null.decision(190.0, 0.05).unwrap();
        assert!(!d.reject);
    }

    #[test]
    fn power_at_zero_alternative_is_level() {
        let f = DMatrix::zeros(5, 1);
        let w = vec![DMatrix::identity(1, 1); 5];
        let wts = [0.125, 0.25, 0.25, 0.25, 0.125];
        let p = predicted_power(&f, &w, &wts, 0.3, 500, 0.2, &epa(), 1.0, 0.05).unwrap();
        assert!((p - 0.05).abs() < 1e-12);
        let f = DMatrix::from_element(5, 1, 1.0);
        let p1 = predicted_power(&f, &w, &wts, 0.01, 500, 0.2, &epa(), 1.0, 0.05).unwrap();
        let p2 = predicted_power(&f, &w, &wts, 0.02, 500, 0.2, &epa(), 1.0, 0.05).unwrap();
        assert!(0.05 < p1 && p1 < p2);
    }

    fn noisy(n: usize, seed: u64) -> RegressionData {
        let mut r = rng::stream(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0, rng::gaussian(&mut r)]).collect();
        let y = rows
            .iter()
            .map(|row| 0.5 + 1.5 * row[1] + rng::gaussian(&mut r))
            .collect();
        RegressionData::from_rows(y, &rows).unwrap()
    }

    #[test]
    fn normalizer_weights_whiten() {
        let data = noisy(200, 3);
        let config = PipelineConfig::new(Kernel::Epanechnikov, 0.3);
        let a = Hypothesis::selection_matrix(2, &[1]).unwrap();
        let eval = evaluate_delta(&data, &a, &Target::Estimate, &WeightScheme::ALL, &config).unwrap();
        let c = eval.component(WeightScheme::Normalizer).unwrap();
        assert!((c.xi1 - 1.0).abs() < 1e-9);
        assert!((c.xi2 - 1.0).abs() < 1e-9);
        let w = weight_field(WeightScheme::Normalizer, &a, &eval.field).unwrap();
        for k in 0..eval.field.grid().len() {
            let prod = &w[k] * (&a * eval.field.xi(k) * a.transpose());
            assert!((prod[(0, 0)] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn tn_is_linear_in_weights() {
        let data = noisy(150, 5);
        let grid = EvaluationGrid::observation(150).unwrap();
        let fit = local_linear_fit(&data, &Kernel::Epanechnikov, 0.3, &grid).unwrap();
        let a = Hypothesis::selection_matrix(2, &[0, 1]).unwrap();
        let target = DVector::from_vec(vec![0.5, 1.5]);
        let w1 = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]); 150];
        let w2: Vec<_> = w1.iter().map(|m| m * 2.0).collect();
        let wts = fit.integration_weights().unwrap();
        let t1 = compute_tn(&fit, &a, &target, &w1, &wts).unwrap();
        let t2 = compute_tn(&fit, &a, &target, &w2, &wts).unwrap();
        assert!(t1 > 0.0);
        assert!((t2 - 2.0 * t1).abs() < 1e-12 * t1.max(1.0));
    }

    #[test]
    fn glrt_vanishes_for_equal_fits() {
        let data = noisy(120, 9);
        let grid = EvaluationGrid::observation(120).unwrap();
        let fit = local_linear_fit(&data, &Kernel::Epanechnikov, 0.4, &grid).unwrap();
        let t = glrt_statistic(&data, &fit).unwrap();
        assert!(t >= 0.0);
        let cal = glrt_bootstrap(&data, &Kernel::Epanechnikov, 0.4, 200, 1).unwrap();
        assert!((cal.statistic - t).abs() < 1e-8);
        assert!(cal.null.quantile(0.1).unwrap() <= cal.null.quantile(0.05).unwrap());
    }

    #[test]
    fn simulated_calibration_is_deterministic() {
        let mut config = PipelineConfig::new(Kernel::Epanechnikov, 0.3);
        config.covariance.varpi = Bandwidth::Fixed(0.3);
        config.covariance.tau = Bandwidth::Fixed(0.3);
        config.covariance.lag = LagChoice::Fixed(0);
        let a = Hypothesis::selection_matrix(2, &[1]).unwrap();
        let one = simulate_null(100, &a, &Target::Estimate, &[WeightScheme::Identity], &config, 200, 4)
            .unwrap();
        let two = simulate_null(100, &a, &Target::Estimate, &[WeightScheme::Identity], &config, 200, 4)
            .unwrap();
        assert_eq!(one.distributions, two.distributions);
        let d = one.distribution(WeightScheme::Identity).unwrap();
        assert!(d.quantile(0.05).unwrap() >= d.quantile(0.10).unwrap());
        assert!(simulate_null(100, &a, &Target::Estimate, &[WeightScheme::Identity], &config, 100, 4)
            .is_err());
    }
}
