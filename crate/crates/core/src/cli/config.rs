//! Command configuration shared by the binary and the report writer.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, Target, WeightScheme};
use crate::kernels::Kernel;
use crate::testing::MIN_REPLICATES;

use super::replicate::ReplicationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Estimate,
    Test,
    Select,
    Simulate,
    Bandwidth,
    Replicate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Test => "test",
            Command::Select => "select",
            Command::Simulate => "simulate",
            Command::Bandwidth => "bandwidth",
            Command::Replicate => "replicate",
        }
    }
}

/// `auto` or an explicit positive value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "lowercase")]
pub enum Policy {
    Auto,
    Value(f64),
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Policy::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Policy::Value(v)),
            _ => Err(Error::invalid(format!("expected 'auto' or a non-negative number, got '{s}'"))),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Auto => f.write_str("auto"),
            Policy::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    Asymptotic,
    Simulated,
}

impl FromStr for CalibrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asymptotic" => Ok(CalibrationKind::Asymptotic),
            "simulated" => Ok(CalibrationKind::Simulated),
            other => Err(Error::invalid(format!("unknown calibration '{other}'"))),
        }
    }
}

/// Textual hypothesis as given on the command line.
///
/// `a_matrix` is either a comma-separated list of columns (names or
/// zero-based indices), giving a selection matrix, or `rows:` followed by
/// `;`-separated rows of comma-separated numbers. `target` is `estimate`
/// or a comma-separated vector of length `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub a_matrix: String,
    pub target: String,
    pub weights: WeightScheme,
}

impl HypothesisSpec {
    pub fn resolve(&self, data: &RegressionData) -> Result<Hypothesis> {
        let a = parse_a_matrix(&self.a_matrix, data)?;
        let target = parse_target(&self.target)?;
        Hypothesis::new(a, target, self.weights)
    }
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("'{v}' is not a number")))
        })
        .collect()
}

pub fn parse_a_matrix(spec: &str, data: &RegressionData) -> Result<DMatrix<f64>> {
    let p = data.p();
    if let Some(body) = spec.strip_prefix("rows:") {
        let rows = body.split(';').map(parse_numbers).collect::<Result<Vec<_>>>()?;
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid(format!("every row of A needs {p} entries")));
        }
        return Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]));
    }
    let coords = spec
        .split(',')
        .map(|c| {
            let c = c.trim();
            data.column_index(c)
                .or_else(|| c.parse::<usize>().ok().filter(|&j| j < p))
                .ok_or_else(|| Error::invalid(format!("unknown column '{c}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Hypothesis::selection_matrix(p, &coords)
}

pub fn parse_target(spec: &str) -> Result<Target> {
    if spec.trim().eq_ignore_ascii_case("estimate") {
        Ok(Target::Estimate)
    } else {
        Ok(Target::Fixed(DVector::from_vec(parse_numbers(spec)?)))
    }
}

/// Everything a command needs, echoed verbatim into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub command: Command,
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub kernel: String,
    pub bandwidth: Policy,
    pub grid_size: Option<usize>,
    pub hypothesis: Option<HypothesisSpec>,
    pub alpha: f64,
    pub calibration: CalibrationKind,
    pub nsim: usize,
    pub seed: u64,
    pub chi: Policy,
    pub replication: Option<ReplicationSpec>,
}

impl AnalysisConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            input_path: None,
            output_path: None,
            kernel: "epanechnikov".to_owned(),
            bandwidth: Policy::Auto,
            grid_size: None,
            hypothesis: None,
            alpha: 0.05,
            calibration: CalibrationKind::Asymptotic,
            nsim: 1000,
            seed: 0,
            chi: Policy::Auto,
            replication: None,
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::from_name(&self.kernel)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.calibration == CalibrationKind::Simulated && self.nsim < MIN_REPLICATES {
            return Err(Error::invalid(format!(
                "simulated calibration needs nsim >= {MIN_REPLICATES}, got {}",
                self.nsim
            )));
        }
        if let Policy::Value(b) = self.bandwidth {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::invalid(format!("bandwidth must lie in (0, 1], got {b}")));
            }
        }
        if let Some(g) = self.grid_size {
            if g < 2 {
                return Err(Error::invalid("grid size must be at least 2"));
            }
        }
        if let Some(path) = &self.input_path {
            if !path.is_file() {
                return Err(Error::invalid(format!("input file {} is not readable", path.display())));
            }
        }
        if let Some(dir) = self.output_path.as_ref().and_then(|p| p.parent()) {
            if !dir.as_os_str().is_empty() && !dir.is_dir() {
                return Err(Error::invalid(format!("output directory {} does not exist", dir.display())));
            }
        }
        let needs_input = matches!(
            self.command,
            Command::Estimate | Command::Test | Command::Select | Command::Bandwidth
        );
        if needs_input && self.input_path.is_none() {
            return Err(Error::invalid(format!("{} needs an input file", self.command.as_str())));
        }
        if self.command == Command::Test && self.hypothesis.is_none() {
            return Err(Error::invalid("test needs a hypothesis"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_parse() {
        assert_eq!("auto".parse::<Policy>().unwrap(), Policy::Auto);
        assert_eq!("0.25".parse::<Policy>().unwrap(), Policy::Value(0.25));
        assert!("-1".parse::<Policy>().is_err());
        assert!("x".parse::<Policy>().is_err());
    }

    #[test]
    fn validation_rules() {
        let mut c = AnalysisConfig::new(Command::Simulate);
        assert!(c.validate().is_ok());
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        c.alpha = 0.05;
        c.calibration = CalibrationKind::Simulated;
        c.nsim = 199;
        assert!(c.validate().is_err());
        c.nsim = 200;
        assert!(c.validate().is_ok());
        c.kernel = "gaussian".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hypothesis_specs() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, (i * i) as f64]).collect();
        let data = RegressionData::from_rows(vec![0.0; 10], &rows).unwrap();
        let a = parse_a_matrix("x2,0", &data).unwrap();
        assert_eq!(a.shape(), (2, 3));
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(1, 0)], 1.0);
        let a = parse_a_matrix("rows:1,-1,0", &data).unwrap();
        assert_eq!(a[(0, 1)], -1.0);
        assert!(parse_a_matrix("rows:1,0", &data).is_err());
        assert!(parse_a_matrix("x9", &data).is_err());
        assert_eq!(parse_target("estimate").unwrap(), Target::Estimate);
        assert_eq!(parse_target("0,1.5").unwrap(), Target::Fixed(DVector::from_vec(vec![0.0, 1.5])));
    }
}
