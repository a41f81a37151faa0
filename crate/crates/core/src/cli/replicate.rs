//! Monte Carlo replication of the simulation studies.
//!
//! Replicate `r` of stream `s` is seeded with `derive_seed(seed, s, r)`,
//! where `s` names the table and model, for example `table1/i`. Results are
//! keyed by replicate index, so parallel and sequential runs agree exactly.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, Target, WeightScheme};
use crate::kernels::Kernel;
use crate::processes::{ar_arch_regression, simulate_model_i, simulate_model_ii, ModelSample, ProcessKind};
use crate::rng::derive_seed;
use crate::selection::{default_chi, select_subset, Search};
use crate::testing::{evaluate_delta, glrt_bootstrap, simulate_null, EmpiricalNull, PipelineConfig};

use super::report::PlotTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableId {
    /// Variable selection frequencies.
    Table1,
    /// Empirical acceptance of the constancy test.
    Table2,
    /// GLRT against `Δ_n` on the AR-ARCH process.
    GlrtQq,
}

impl TableId {
    pub fn as_str(self) -> &'static str {
        match self {
            TableId::Table1 => "table1",
            TableId::Table2 => "table2",
            TableId::GlrtQq => "glrt_qq",
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table1" => Ok(TableId::Table1),
            "table2" => Ok(TableId::Table2),
            "glrt_qq" | "glrt" => Ok(TableId::GlrtQq),
            other => Err(Error::invalid(format!("unknown table '{other}'"))),
        }
    }
}

/// Optional departures from the default study design.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOverrides {
    pub bandwidths: Option<Vec<f64>>,
    pub models: Option<Vec<ProcessKind>>,
    pub schemes: Option<Vec<WeightScheme>>,
    /// Calibration or bootstrap replicates.
    pub nsim: Option<usize>,
    pub kernel: Option<String>,
    pub grid_size: Option<usize>,
    pub chi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSpec {
    pub table: TableId,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub overrides: ReplicationOverrides,
    /// Fan replicates out over the thread pool.
    pub parallel: bool,
}

impl ReplicationSpec {
    pub fn new(table: TableId, reps: usize, n: usize, seed: u64) -> Self {
        Self {
            table,
            reps,
            n,
            seed,
            overrides: ReplicationOverrides::default(),
            parallel: true,
        }
    }
}

/// One estimated percentage with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub bandwidth: f64,
    /// Weight scheme or statistic the cell belongs to, if any.
    pub variant: Option<String>,
    pub metric: String,
    /// Nominal acceptance level in percent, for acceptance cells.
    pub nominal: Option<f64>,
    pub percent: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub table_id: TableId,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub nsim: Option<usize>,
    pub cells: Vec<Cell>,
    /// Wall-clock seconds; excluded when comparing runs.
    pub runtime_seconds: f64,
}

impl ReplicationSummary {
    pub fn cell(&self, model: &str, bandwidth: f64, variant: Option<&str>, metric: &str, nominal: Option<f64>) -> Option<&Cell> {
        self.cells.iter().find(|c| {
            c.model == model
                && (c.bandwidth - bandwidth).abs() < 1e-12
                && c.variant.as_deref() == variant
                && c.metric == metric
                && c.nominal == nominal
        })
    }

    /// Equality of everything except the runtime.
    pub fn same_results(&self, other: &Self) -> bool {
        self.table_id == other.table_id
            && self.reps == other.reps
            && self.n == other.n
            && self.seed == other.seed
            && self.nsim == other.nsim
            && self.cells == other.cells
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub summary: ReplicationSummary,
    pub plot: PlotTable,
}

fn cell(model: &str, bandwidth: f64, variant: Option<&str>, metric: &str, nominal: Option<f64>, hits: usize, reps: usize) -> Cell {
    let p = hits as f64 / reps as f64;
    Cell {
        model: model.to_owned(),
        bandwidth,
        variant: variant.map(str::to_owned),
        metric: metric.to_owned(),
        nominal,
        percent: 100.0 * p,
        std_error: 100.0 * (p * (1.0 - p) / reps as f64).sqrt(),
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_owned())
}

/// Runs `f` for every replicate index, converting errors and panics into
/// `Error::Replicate` for the lowest failing index.
fn for_each_rep<T, F>(reps: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let guarded = |r: usize| -> Result<T> {
        match catch_unwind(AssertUnwindSafe(|| f(r))) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(Error::Replicate { index: r, source: Box::new(e) }),
            Err(payload) => Err(Error::Replicate {
                index: r,
                source: Box::new(Error::numerical(format!("panicked: {}", panic_message(payload)))),
            }),
        }
    };
    if parallel {
        (0..reps).into_par_iter().map(guarded).collect()
    } else {
        (0..reps).map(guarded).collect()
    }
}

fn default_bandwidths() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

fn simulate_model(model: ProcessKind, n: usize, seed: u64) -> Result<ModelSample> {
    match model {
        ProcessKind::ModelI => simulate_model_i(n, seed),
        ProcessKind::ModelIi => simulate_model_ii(n, seed),
        other => Err(Error::invalid(format!("model '{other}' has no regression design for this table"))),
    }
}

fn design_width(model: ProcessKind) -> usize {
    match model {
        ProcessKind::ModelI => 6,
        _ => 5 + crate::processes::MODEL_II_LAGS,
    }
}

/// Column of `x1` in each regression design.
fn x1_column(model: ProcessKind) -> usize {
    match model {
        ProcessKind::ModelI => 1,
        _ => 0,
    }
}

struct Setup {
    kernel: Kernel,
    bandwidths: Vec<f64>,
    models: Vec<ProcessKind>,
    schemes: Vec<WeightScheme>,
}

fn setup(spec: &ReplicationSpec, default_b: Vec<f64>, default_models: Vec<ProcessKind>) -> Result<Setup> {
    let o = &spec.overrides;
    let kernel = Kernel::from_name(o.kernel.as_deref().unwrap_or("epanechnikov"))?;
    let bandwidths = o.bandwidths.clone().unwrap_or(default_b);
    if bandwidths.is_empty() || bandwidths.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
        return Err(Error::invalid("bandwidths must lie in (0, 1]"));
    }
    Ok(Setup {
        kernel,
        bandwidths,
        models: o.models.clone().unwrap_or(default_models),
        schemes: o.schemes.clone().unwrap_or_else(|| WeightScheme::ALL.to_vec()),
    })
}

/// Runs one replication study.
pub fn run_replication(spec: &ReplicationSpec) -> Result<ReplicationOutput> {
    if spec.reps == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let start = Instant::now();
    let (cells, plot, nsim) = match spec.table {
        TableId::Table1 => table1(spec)?,
        TableId::Table2 => table2(spec)?,
        TableId::GlrtQq => glrt_qq(spec)?,
    };
    Ok(ReplicationOutput {
        summary: ReplicationSummary {
            table_id: spec.table,
            reps: spec.reps,
            n: spec.n,
            seed: spec.seed,
            nsim,
            cells,
            runtime_seconds: start.elapsed().as_secs_f64(),
        },
        plot,
    })
}

type StudyOutput = (Vec<Cell>, PlotTable, Option<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fit {
    Under,
    Correct,
    Over,
}

impl Fit {
    fn classify(chosen: &[usize], truth: &[usize]) -> Self {
        if !truth.iter().all(|t| chosen.contains(t)) {
            Fit::Under
        } else if chosen.len() == truth.len() {
            Fit::Correct
        } else {
            Fit::Over
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Fit::Under => "under",
            Fit::Correct => "correct",
            Fit::Over => "over",
        }
    }
}

/// Selection frequencies: each replicate draws one dataset and runs VIC
/// at every bandwidth.
fn table1(spec: &ReplicationSpec) -> Result<StudyOutput> {
    let s = setup(spec, default_bandwidths(), vec![ProcessKind::ModelI, ProcessKind::ModelIi])?;
    let chi = spec.overrides.chi.unwrap_or_else(|| default_chi(spec.n));
    let mut cells = Vec::new();
    let mut plot = PlotTable::new(&["model", "bandwidth", "rep", "chosen", "fit"]);
    for &model in &s.models {
        let stream = format!("{}/{}", spec.table, model);
        let per_rep = for_each_rep(spec.reps, spec.parallel, |r| {
            let sample = simulate_model(model, spec.n, derive_seed(spec.seed, &stream, r as u64))?;
            s.bandwidths
                .iter()
                .map(|&b| {
                    let report = select_subset(&sample.data, &s.kernel, b, chi, Search::Exhaustive)?;
                    Ok((Fit::classify(&report.chosen, &sample.truth), report.chosen))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (k, &b) in s.bandwidths.iter().enumerate() {
            for fit in [Fit::Under, Fit::Correct, Fit::Over] {
                let hits = per_rep.iter().filter(|row| row[k].0 == fit).count();
                cells.push(cell(model.as_str(), b, None, fit.as_str(), None, hits, spec.reps));
            }
            for (r, row) in per_rep.iter().enumerate() {
                let chosen: Vec<String> = row[k].1.iter().map(usize::to_string).collect();
                plot.rows.push(vec![
                    model.to_string(),
                    b.to_string(),
                    r.to_string(),
                    chosen.join(" "),
                    row[k].0.as_str().to_owned(),
                ]);
            }
        }
    }
    Ok((cells, plot, None))
}

/// Sorted statistics against matching null quantiles at `(k + 1/2)/R`.
fn qq_pairs(observed: &[f64], null: &EmpiricalNull) -> Result<Vec<(f64, f64)>> {
    let mut sorted = observed.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &v)| Ok((v, null.quantile(1.0 - (k as f64 + 0.5) / r)?)))
        .collect()
}

const TABLE2_LEVELS: [f64; 2] = [0.10, 0.05];
const GLRT_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

/// Acceptance of `H₀: β_{x1}(·)` constant, with `â` estimated and critical
/// values from one simulated null per model and bandwidth.
fn table2(spec: &ReplicationSpec) -> Result<StudyOutput> {
    let s = setup(spec, default_bandwidths(), vec![ProcessKind::ModelI, ProcessKind::ModelIi])?;
    let nsim = spec.overrides.nsim.unwrap_or(2000);
    let mut cells = Vec::new();
    let mut plot = PlotTable::new(&["model", "bandwidth", "scheme", "k", "delta", "null_quantile"]);
    for &model in &s.models {
        let stream = format!("{}/{}", spec.table, model);
        let p = design_width(model);
        let a = Hypothesis::constancy(p, &[x1_column(model)], WeightScheme::Identity)?.a().clone();
        for &b in &s.bandwidths {
            let mut config = PipelineConfig::new(s.kernel.clone(), b);
            config.grid_size = spec.overrides.grid_size;
            let null_seed = derive_seed(spec.seed, &format!("{stream}/null/{b}"), 0);
            let null = simulate_null(spec.n, &a, &Target::Estimate, &s.schemes, &config, nsim, null_seed)?;
            let deltas = for_each_rep(spec.reps, spec.parallel, |r| {
                let sample = simulate_model(model, spec.n, derive_seed(spec.seed, &stream, r as u64))?;
                let eval = evaluate_delta(&sample.data, &a, &Target::Estimate, &s.schemes, &config)?;
                Ok(eval.components.iter().map(|c| c.delta).collect::<Vec<_>>())
            })?;
            for (j, &scheme) in s.schemes.iter().enumerate() {
                let dist = null.distribution(scheme)?;
                let observed: Vec<f64> = deltas.iter().map(|d| d[j]).collect();
                for alpha in TABLE2_LEVELS {
                    let q = dist.quantile(alpha)?;
                    let hits = observed.iter().filter(|&&d| d <= q).count();
                    let nominal = Some(100.0 * (1.0 - alpha));
                    cells.push(cell(model.as_str(), b, Some(scheme.as_str()), "accept", nominal, hits, spec.reps));
                }
                for (k, (d, q)) in qq_pairs(&observed, dist)?.into_iter().enumerate() {
                    plot.rows.push(vec![
                        model.to_string(),
                        b.to_string(),
                        scheme.to_string(),
                        k.to_string(),
                        d.to_string(),
                        q.to_string(),
                    ]);
                }
            }
        }
    }
    Ok((cells, plot, Some(nsim)))
}

/// GLRT with its conditional bootstrap against `Δ_n` with identity weights
/// and a simulated null, both testing constancy of the AR coefficient.
fn glrt_qq(spec: &ReplicationSpec) -> Result<StudyOutput> {
    let default_b = (spec.n as f64).powf(-0.2);
    let s = setup(spec, vec![default_b], vec![ProcessKind::ArArch])?;
    if s.models != [ProcessKind::ArArch] {
        return Err(Error::invalid("glrt_qq uses the AR-ARCH process only"));
    }
    let b = s.bandwidths[0];
    let nsim = spec.overrides.nsim.unwrap_or(1000);
    let stream = format!("{}/ararch", spec.table);
    let mut config = PipelineConfig::new(s.kernel.clone(), b);
    config.grid_size = spec.overrides.grid_size;
    let a = DMatrix::from_element(1, 1, 1.0);
    let schemes = [WeightScheme::Identity];
    let null_seed = derive_seed(spec.seed, &format!("{stream}/null"), 0);
    let null = simulate_null(spec.n, &a, &Target::Estimate, &schemes, &config, nsim, null_seed)?;
    let dist = null.distribution(WeightScheme::Identity)?;
    let per_rep = for_each_rep(spec.reps, spec.parallel, |r| {
        let seed = derive_seed(spec.seed, &stream, r as u64);
        let data: RegressionData = ar_arch_regression(spec.n, seed)?;
        let delta = evaluate_delta(&data, &a, &Target::Estimate, &schemes, &config)?.components[0].delta;
        let boot_seed = derive_seed(spec.seed, &format!("{stream}/bootstrap"), r as u64);
        let glrt = glrt_bootstrap(&data, &s.kernel, b, nsim, boot_seed)?;
        let glrt_accept = GLRT_LEVELS
            .iter()
            .map(|&alpha| Ok(glrt.statistic <= glrt.null.quantile(alpha)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((delta, glrt.statistic, glrt_accept, glrt.null.samples().to_vec()))
    })?;
    let mut cells = Vec::new();
    let model = ProcessKind::ArArch.as_str();
    for (k, alpha) in GLRT_LEVELS.iter().enumerate() {
        let nominal = Some(100.0 * (1.0 - alpha));
        let glrt_hits = per_rep.iter().filter(|r| r.2[k]).count();
        cells.push(cell(model, b, Some("glrt"), "accept", nominal, glrt_hits, spec.reps));
        let q = dist.quantile(*alpha)?;
        let delta_hits = per_rep.iter().filter(|r| r.0 <= q).count();
        cells.push(cell(model, b, Some("delta"), "accept", nominal, delta_hits, spec.reps));
    }
    let deltas: Vec<f64> = per_rep.iter().map(|r| r.0).collect();
    let glrts: Vec<f64> = per_rep.iter().map(|r| r.1).collect();
    let pooled = EmpiricalNull::new(per_rep.into_iter().flat_map(|r| r.3).collect())?;
    let mut plot = PlotTable::new(&["k", "delta", "delta_null_quantile", "glrt", "glrt_bootstrap_quantile"]);
    let dq = qq_pairs(&deltas, dist)?;
    let gq = qq_pairs(&glrts, &pooled)?;
    for (k, ((d, dn), (g, gn))) in dq.into_iter().zip(gq).enumerate() {
        plot.rows.push(vec![k.to_string(), d.to_string(), dn.to_string(), g.to_string(), gn.to_string()]);
    }
    Ok((cells, plot, Some(nsim)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_classes() {
        assert_eq!(Fit::classify(&[0, 1, 2], &[0, 1, 2]), Fit::Correct);
        assert_eq!(Fit::classify(&[0, 1, 2, 4], &[0, 1, 2]), Fit::Over);
        assert_eq!(Fit::classify(&[0, 2, 4], &[0, 1, 2]), Fit::Under);
    }

    #[test]
    fn table_ids_parse() {
        assert_eq!("glrt_qq".parse::<TableId>().unwrap(), TableId::GlrtQq);
        assert!("table3".parse::<TableId>().is_err());
    }

    #[test]
    fn failures_carry_lowest_index() {
        let err = for_each_rep(10, true, |r| if r >= 4 { Err(Error::numerical("boom")) } else { Ok(r) }).unwrap_err();
        assert!(matches!(err, Error::Replicate { index: 4, .. }));
        let err = for_each_rep(10, false, |r| -> Result<usize> {
            if r == 6 {
                panic!("bad replicate");
            }
            Ok(r)
        })
        .unwrap_err();
        match err {
            Error::Replicate { index, source } => {
                assert_eq!(index, 6);
                assert!(source.to_string().contains("bad replicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_table1_is_deterministic_across_schedules() {
        let mut spec = ReplicationSpec::new(TableId::Table1, 4, 200, 9);
        spec.overrides.bandwidths = Some(vec![0.3]);
        spec.overrides.models = Some(vec![ProcessKind::ModelI]);
        let par = run_replication(&spec).unwrap();
        spec.parallel = false;
        let seq = run_replication(&spec).unwrap();
        assert!(par.summary.same_results(&seq.summary));
        assert_eq!(par.plot, seq.plot);
        assert_eq!(par.summary.cells.len(), 3);
        let total: f64 = par.summary.cells.iter().map(|c| c.percent).sum();
        assert!((total - 100.0).abs() < 1e-9);
    }
}
