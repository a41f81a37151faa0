use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tvreg_core::cli::config::parse_a_matrix;
use tvreg_core::cli::ingest::{write_csv_to, write_series_to};
use tvreg_core::cli::replicate::ReplicationOverrides;
use tvreg_core::cli::report::{sibling_path, write_curve_csv};
use tvreg_core::cli::{
    emit_report, ingest_csv, run_replication, AnalysisConfig, CalibrationKind, Command, CsvSchema,
    HypothesisSpec, Policy, ReplicationSpec, Report, TableId,
};
use tvreg_core::covariance::{estimate_covariance_field, CovarianceBandwidths};
use tvreg_core::locfit::{parametric_confidence_intervals, ConfidenceInterval};
use tvreg_core::processes::{
    simulate_ar_arch, simulate_model_i, simulate_model_ii, simulate_tvar, ProcessKind, TvarSpec,
};
use tvreg_core::selection::{
    default_b_grid, default_chi, gcv_bandwidth, pilot_gamma, select_subset, two_stage_bandwidth, GcvScan, Search,
    TwoStage,
};
use tvreg_core::testing::{run_test, Calibration, PipelineConfig};
use tvreg_core::{local_linear_fit, Error, Kernel, RegressionData, Result, WeightScheme};

const TVAR_BURN_IN: usize = 200;

#[derive(Parser)]
#[command(name = "tvreg", version, about = "Time-varying coefficient regression: estimation, tests and selection")]
struct Cli {
    /// Smoothing kernel: epanechnikov or bartlett.
    #[arg(long, global = true, default_value = "epanechnikov")]
    kernel: String,
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; JSON reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluate curves on a uniform grid of this size instead of at i/n.
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Response column.
    #[arg(long, default_value = "y")]
    response: String,
    /// Comma-separated predictor columns; all other columns when omitted.
    #[arg(long, value_delimiter = ',')]
    predictors: Vec<String>,
    /// Comma-separated response lags to append as predictors.
    #[arg(long, value_delimiter = ',')]
    lags: Vec<usize>,
    /// Scale every used column to zero mean and unit variance.
    #[arg(long)]
    standardize: bool,
    /// Prepend an intercept column.
    #[arg(long)]
    intercept: bool,
}

impl DataArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            response: self.response.clone(),
            predictors: self.predictors.clone(),
            lags: self.lags.clone(),
            standardize: self.standardize,
            intercept: self.intercept,
        }
    }
}

#[derive(Subcommand)]
enum Sub {
    /// Fit coefficient curves and integrated-coefficient intervals.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        /// `auto` (GCV) or a value in (0, 1].
        #[arg(long, default_value = "auto")]
        bandwidth: Policy,
        /// Confidence level of the intervals for the integrated coefficients.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Test H0: A β(·) = a.
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// Columns (names or zero-based indices), or `rows:` followed by rows of A.
        #[arg(long = "A")]
        a_matrix: String,
        /// `estimate` or a comma-separated fixed vector.
        #[arg(long = "a", default_value = "estimate")]
        target: String,
        /// Weight scheme: identity, normalizer or prediction.
        #[arg(long, default_value = "identity")]
        weights: String,
        /// Significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Critical values: asymptotic (normal) or simulated.
        #[arg(long, default_value = "asymptotic")]
        calibration: String,
        /// Null replicates for simulated calibration.
        #[arg(long, default_value_t = 1000)]
        nsim: usize,
        /// `auto` (GCV) or a value in (0, 1].
        #[arg(long, default_value = "auto")]
        bandwidth: Policy,
    },
    /// Choose the column subset minimizing VIC.
    Select {
        #[command(flatten)]
        data: DataArgs,
        /// Penalty per selected column: `auto` (n^{-2/5}) or a value.
        #[arg(long, default_value = "auto")]
        chi: Policy,
        /// Subset search: exhaustive or forward.
        #[arg(long, default_value = "exhaustive")]
        search: String,
        /// `auto` (two-stage GCV) or a value in (0, 1].
        #[arg(long, default_value = "auto")]
        bandwidth: Policy,
    },
    /// Generalized cross-validation bandwidth.
    Bandwidth {
        #[command(flatten)]
        data: DataArgs,
        /// Restrict to these columns and scan GCV only; otherwise run the two-stage rule.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<String>,
        /// Penalty per selected column: `auto` (n^{-2/5}) or a value.
        #[arg(long, default_value = "auto")]
        chi: Policy,
        /// Subset search: exhaustive or forward.
        #[arg(long, default_value = "exhaustive")]
        search: String,
        /// Golden-section refinement around the best grid value.
        #[arg(long)]
        refine: bool,
    },
    /// Write a simulated sample as CSV.
    Simulate {
        /// i, ii, tvar or ararch.
        #[arg(long)]
        model: String,
        /// Sample size.
        #[arg(long)]
        n: usize,
    },
    /// Monte Carlo replication of a simulation study.
    Replicate {
        /// table1, table2 or glrt_qq.
        #[arg(long)]
        table: String,
        /// Monte Carlo replications.
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Sample size per replication.
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Comma-separated bandwidths; the study's defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        bandwidths: Vec<f64>,
        /// Comma-separated models (i, ii); the study's defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Comma-separated weight schemes for table2.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<String>,
        /// Calibration or bootstrap replicates.
        #[arg(long)]
        nsim: Option<usize>,
        /// Fixed selection penalty for table1; n^{-2/5} when omitted.
        #[arg(long)]
        chi: Option<f64>,
        /// Run replicates one after another.
        #[arg(long)]
        sequential: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tvreg: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn base_config(cli: &Cli, command: Command) -> AnalysisConfig {
    let mut c = AnalysisConfig::new(command);
    c.kernel = cli.kernel.clone();
    c.seed = cli.seed;
    c.output_path = cli.out.clone();
    c.grid_size = cli.grid_size;
    c
}

fn write_report<T: Serialize>(cli: &Cli, report: &Report<T>) -> Result<()> {
    match &cli.out {
        Some(path) => emit_report(report, path),
        None => {
            std::io::stdout().write_all(report.to_json()?.as_bytes())?;
            Ok(())
        }
    }
}

fn config_echo(config: &AnalysisConfig, schema: Option<&CsvSchema>) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "analysis": serde_json::to_value(config)?,
        "data": serde_json::to_value(schema)?,
    }))
}

/// `auto`: GCV over the default grid with every column, the first stage of
/// the two-stage rule.
fn resolve_bandwidth(policy: Policy, data: &RegressionData, kernel: &Kernel) -> Result<f64> {
    match policy {
        Policy::Value(b) => Ok(b),
        Policy::Auto => {
            let all: Vec<usize> = (0..data.p()).collect();
            let gamma = pilot_gamma(data, &all, kernel)?;
            Ok(gcv_bandwidth(data, &all, kernel, &default_b_grid(), &gamma, false)?.best)
        }
    }
}

fn resolve_chi(policy: Policy, n: usize) -> f64 {
    match policy {
        Policy::Auto => default_chi(n),
        Policy::Value(v) => v,
    }
}

#[derive(Serialize)]
struct NamedInterval {
    name: String,
    #[serde(flatten)]
    interval: ConfidenceInterval,
}

#[derive(Serialize)]
struct EstimateResult {
    n: usize,
    p: usize,
    columns: Vec<String>,
    bandwidth: f64,
    hat_trace: f64,
    rss: f64,
    level: f64,
    integrated: Vec<NamedInterval>,
    covariance_bandwidths: CovarianceBandwidths,
    truncation_lag: usize,
    flagged_points: usize,
    curve_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct BandwidthResult {
    subset: Vec<usize>,
    scan: Option<GcvScan>,
    two_stage: Option<TwoStage>,
    bandwidth: f64,
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Sub::Estimate { data: args, bandwidth, level } => {
            let mut config = base_config(&cli, Command::Estimate);
            config.input_path = Some(args.input.clone());
            config.bandwidth = *bandwidth;
            config.validate()?;
            if !(*level > 0.0 && *level < 1.0) {
                return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
            }
            let schema = args.schema();
            let data = ingest_csv(&args.input, &schema)?;
            let kernel = config.kernel()?;
            let b = resolve_bandwidth(*bandwidth, &data, &kernel)?;
            let mut pipeline = PipelineConfig::new(kernel.clone(), b);
            pipeline.grid_size = cli.grid_size;
            let grid = pipeline.grid(data.n())?;
            let fit = local_linear_fit(&data, &kernel, b, &grid)?;
            let field = estimate_covariance_field(&data, &fit, &kernel, &pipeline.covariance)?;
            let identity = nalgebra::DMatrix::identity(data.p(), data.p());
            let intervals = parametric_confidence_intervals(&fit, &identity, &field, *level)?;
            let curve_csv = cli.out.as_deref().map(|p| sibling_path(p, "curve"));
            if let Some(path) = &curve_csv {
                write_curve_csv(&fit, path)?;
            }
            let result = EstimateResult {
                n: data.n(),
                p: data.p(),
                columns: data.column_names().to_vec(),
                bandwidth: b,
                hat_trace: fit.hat_trace(),
                rss: fit.rss(),
                level: *level,
                integrated: data
                    .column_names()
                    .iter()
                    .cloned()
                    .zip(intervals)
                    .map(|(name, interval)| NamedInterval { name, interval })
                    .collect(),
                covariance_bandwidths: field.bandwidths(),
                truncation_lag: field.truncation_lag(),
                flagged_points: fit
                    .singular_flags()
                    .iter()
                    .zip(field.flags())
                    .filter(|(a, b)| **a || **b)
                    .count(),
                curve_csv,
            };
            let report = Report::new("estimate", config_echo(&config, Some(&schema))?, None, result);
            write_report(&cli, &report)
        }
        Sub::Test {
            data: args,
            a_matrix,
            target,
            weights,
            alpha,
            calibration,
            nsim,
            bandwidth,
        } => {
            let mut config = base_config(&cli, Command::Test);
            config.input_path = Some(args.input.clone());
            config.bandwidth = *bandwidth;
            config.alpha = *alpha;
            config.calibration = calibration.parse()?;
            config.nsim = *nsim;
            config.hypothesis = Some(HypothesisSpec {
                a_matrix: a_matrix.clone(),
                target: target.clone(),
                weights: weights.parse()?,
            });
            config.validate()?;
            let schema = args.schema();
            let data = ingest_csv(&args.input, &schema)?;
            let hypothesis = config.hypothesis.as_ref().expect("set above").resolve(&data)?;
            let kernel = config.kernel()?;
            let b = resolve_bandwidth(*bandwidth, &data, &kernel)?;
            let mut pipeline = PipelineConfig::new(kernel, b);
            pipeline.grid_size = cli.grid_size;
            let cal = match config.calibration {
                CalibrationKind::Asymptotic => Calibration::Asymptotic,
                CalibrationKind::Simulated => Calibration::Simulated { nsim: *nsim, seed: cli.seed },
            };
            let result = run_test(&data, &hypothesis, &pipeline, cal, *alpha)?;
            let seed = (config.calibration == CalibrationKind::Simulated).then_some(cli.seed);
            let report = Report::new("test", config_echo(&config, Some(&schema))?, seed, result);
            write_report(&cli, &report)
        }
        Sub::Select { data: args, chi, search, bandwidth } => {
            let mut config = base_config(&cli, Command::Select);
            config.input_path = Some(args.input.clone());
            config.bandwidth = *bandwidth;
            config.chi = *chi;
            config.validate()?;
            let search: Search = search.parse()?;
            let schema = args.schema();
            let data = ingest_csv(&args.input, &schema)?;
            let kernel = config.kernel()?;
            let chi_n = resolve_chi(*chi, data.n());
            let report = match bandwidth {
                Policy::Value(b) => select_subset(&data, &kernel, *b, chi_n, search)?,
                Policy::Auto => {
                    let stages = two_stage_bandwidth(&data, &kernel, chi_n, &default_b_grid(), search)?;
                    let mut r = select_subset(&data, &kernel, stages.pilot_bandwidth, chi_n, search)?;
                    r.bandwidth_final = stages.final_bandwidth;
                    r
                }
            };
            let report = Report::new("select", config_echo(&config, Some(&schema))?, None, report);
            write_report(&cli, &report)
        }
        Sub::Bandwidth { data: args, subset, chi, search, refine } => {
            let mut config = base_config(&cli, Command::Bandwidth);
            config.input_path = Some(args.input.clone());
            config.chi = *chi;
            config.validate()?;
            let schema = args.schema();
            let data = ingest_csv(&args.input, &schema)?;
            let kernel = config.kernel()?;
            let grid = default_b_grid();
            let result = if subset.is_empty() {
                let stages =
                    two_stage_bandwidth(&data, &kernel, resolve_chi(*chi, data.n()), &grid, search.parse()?)?;
                BandwidthResult {
                    subset: stages.pilot_subset.clone(),
                    scan: None,
                    bandwidth: stages.final_bandwidth,
                    two_stage: Some(stages),
                }
            } else {
                let a = parse_a_matrix(&subset.join(","), &data)?;
                let mut cols: Vec<usize> = (0..a.nrows())
                    .map(|r| (0..a.ncols()).find(|&c| a[(r, c)] == 1.0).expect("selection row"))
                    .collect();
                cols.sort_unstable();
                cols.dedup();
                let gamma = pilot_gamma(&data, &cols, &kernel)?;
                let scan = gcv_bandwidth(&data, &cols, &kernel, &grid, &gamma, *refine)?;
                BandwidthResult {
                    subset: cols,
                    bandwidth: scan.best,
                    scan: Some(scan),
                    two_stage: None,
                }
            };
            let report = Report::new("bandwidth", config_echo(&config, Some(&schema))?, None, result);
            write_report(&cli, &report)
        }
        Sub::Simulate { model, n } => {
            let config = base_config(&cli, Command::Simulate);
            config.validate()?;
            let model: ProcessKind = model.parse()?;
            let out: Box<dyn Write> = match &cli.out {
                Some(p) => Box::new(std::fs::File::create(p)?),
                None => Box::new(std::io::stdout().lock()),
            };
            let m = *n as f64;
            match model {
                ProcessKind::ModelI => write_csv_to(&simulate_model_i(*n, cli.seed)?.data, out, "y")?,
                ProcessKind::ModelIi => write_csv_to(&simulate_model_ii(*n, cli.seed)?.data, out, "y")?,
                ProcessKind::Tvar => {
                    let series = simulate_tvar(&TvarSpec::example(), *n, TVAR_BURN_IN, cli.seed, None)?;
                    let times: Vec<f64> = (1..=*n).map(|i| i as f64 / m).collect();
                    write_series_to(&times, &series, "y", out)?;
                }
                ProcessKind::ArArch => {
                    let series = simulate_ar_arch(*n, cli.seed)?;
                    let times: Vec<f64> = (0..=*n).map(|i| i as f64 / m).collect();
                    write_series_to(&times, &series, "y", out)?;
                }
            }
            Ok(())
        }
        Sub::Replicate {
            table,
            reps,
            n,
            bandwidths,
            models,
            schemes,
            nsim,
            chi,
            sequential,
        } => {
            let table: TableId = table.parse()?;
            let mut spec = ReplicationSpec::new(table, *reps, *n, cli.seed);
            spec.parallel = !sequential;
            spec.overrides = ReplicationOverrides {
                bandwidths: (!bandwidths.is_empty()).then(|| bandwidths.clone()),
                models: if models.is_empty() {
                    None
                } else {
                    Some(models.iter().map(|m| m.parse()).collect::<Result<_>>()?)
                },
                schemes: if schemes.is_empty() {
                    None
                } else {
                    Some(schemes.iter().map(|s| s.parse::<WeightScheme>()).collect::<Result<_>>()?)
                },
                nsim: *nsim,
                kernel: Some(cli.kernel.clone()),
                grid_size: cli.grid_size,
                chi: *chi,
            };
            let mut config = base_config(&cli, Command::Replicate);
            if let Some(b) = nsim {
                config.nsim = *b;
            }
            config.replication = Some(spec.clone());
            config.validate()?;
            let output = run_replication(&spec)?;
            if let Some(path) = &cli.out {
                output.plot.write(sibling_path(path, "plot"))?;
            }
            let report = Report::new("replicate", config_echo(&config, None)?, Some(cli.seed), output.summary);
            write_report(&cli, &report)
        }
    }
}
