use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed sample `(y_i, x_i)`, `i = 1..n`, observed at rescaled time
/// `i / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    y: DVector<f64>,
    x: DMatrix<f64>,
    column_names: Vec<String>,
}

impl RegressionData {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::invalid(format!(
                "response has {} rows but design has {n}",
                y.len()
            )));
        }
        if p == 0 {
            return Err(Error::invalid("design matrix has no columns"));
        }
        if column_names.len() != p {
            return Err(Error::invalid(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        if n < 2 * p + 2 {
            return Err(Error::invalid(format!(
                "need n >= 2p + 2 observations, got n = {n}, p = {p}"
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contain non-finite values"));
        }
        Ok(Self { y, x, column_names })
    }

    /// Builds data from row-major predictor rows, naming columns `x1..xp`.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("ragged design rows"));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(DVector::from_vec(y), x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Rescaled time of the observation with zero-based index `i`.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.n() as f64
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("empty column subset"));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.p()) {
            return Err(Error::invalid(format!("column index {bad} out of range")));
        }
        let x = self.x.select_columns(columns);
        let names = columns.iter().map(|&c| self.column_names[c].clone()).collect();
        Self::new(self.y.clone(), x, names)
    }

    /// Same design, different response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(y, self.x.clone(), self.column_names.clone())
    }

    /// Index of a column by name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Strictly increasing evaluation points in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    points: Vec<f64>,
}

impl EvaluationGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("evaluation grid needs at least two points"));
        }
        if points.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("grid points must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// The points `k / g`, `k = 1..g`; with `g = n` these are the observation times.
    pub fn uniform(g: usize) -> Result<Self> {
        Self::new((1..=g).map(|k| k as f64 / g as f64).collect())
    }

    pub fn observation(n: usize) -> Result<Self> {
        Self::uniform(n)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when the grid coincides with the observation times of an `n`-sample.
    pub fn is_observation_grid(&self, n: usize) -> bool {
        self.points.len() == n
            && self
                .points
                .iter()
                .enumerate()
                .all(|(k, &t)| t == (k + 1) as f64 / n as f64)
    }

    /// Trapezoid weights for integrating a function sampled on the grid over
    /// `[0, 1]`. The function is extended as a constant beyond the first and
    /// last points.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let g = self.points.len();
        let t = &self.points;
        let mut w = vec![0.0; g];
        for k in 0..g - 1 {
            let h = t[k + 1] - t[k];
            w[k] += h / 2.0;
            w[k + 1] += h / 2.0;
        }
        w[0] += t[0];
        w[g - 1] += 1.0 - t[g - 1];
        w
    }

    /// Trapezoid weights restricted to unflagged points: flagged points are
    /// dropped and the weights rescaled so they still sum to one.
    pub fn masked_weights(&self, flags: &[bool]) -> Result<Vec<f64>> {
        let flagged = flags.iter().filter(|&&f| f).count();
        if flagged * 5 > flags.len() {
            return Err(Error::numerical(format!(
                "{flagged} of {} grid points are singular",
                flags.len()
            )));
        }
        let mut w = self.trapezoid_weights();
        for (wk, &f) in w.iter_mut().zip(flags) {
            if f {
                *wk = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_samples_and_nonfinite_values() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64]).collect();
        assert!(RegressionData::from_rows(vec![0.0; 5], &rows).is_err());
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        assert!(RegressionData::from_rows(vec![0.0; 6], &rows).is_ok());
        let mut y = vec![0.0; 6];
        y[2] = f64::NAN;
        assert!(RegressionData::from_rows(y, &rows).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(EvaluationGrid::new(vec![0.5]).is_err());
        assert!(EvaluationGrid::new(vec![0.2, 0.2]).is_err());
        assert!(EvaluationGrid::new(vec![0.2, 1.2]).is_err());
        let g = EvaluationGrid::observation(10).unwrap();
        assert!(g.is_observation_grid(10));
        assert!(!g.is_observation_grid(11));
    }

    #[test]
    fn trapezoid_weights_sum_to_one() {
        let g = EvaluationGrid::uniform(37).unwrap();
        let s: f64 = g.trapezoid_weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let mut flags = vec![false; 37];
        flags[3] = true;
        let s: f64 = g.masked_weights(&flags).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        flags[..8].iter_mut().for_each(|f| *f = true);
        assert!(g.masked_weights(&flags).is_err());
    }
}
