use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Weight matrix `W(t)` used in the integrated squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// `W(t) = I_s`
    Identity,
    /// `W(t) = (A Ξ(t) Aᵀ)⁻¹`
    Normalizer,
    /// `W(t) = A M(t) Aᵀ`
    Prediction,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 3] = [
        WeightScheme::Identity,
        WeightScheme::Normalizer,
        WeightScheme::Prediction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightScheme::Identity => "identity",
            WeightScheme::Normalizer => "normalizer",
            WeightScheme::Prediction => "prediction",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "w1" => Ok(WeightScheme::Identity),
            "normalizer" | "w2" => Ok(WeightScheme::Normalizer),
            "prediction" | "w3" => Ok(WeightScheme::Prediction),
            other => Err(Error::invalid(format!("unknown weight scheme '{other}'"))),
        }
    }
}

/// The hypothesized value of `A β(·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Fixed(DVector<f64>),
    /// Replace `a` by `â = ∫ A β̃(t) dt` (testing parameter constancy).
    Estimate,
}

/// `H₀: A β(·) ≡ a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    a: DMatrix<f64>,
    target: Target,
    weights: WeightScheme,
}

impl Hypothesis {
    pub fn new(a: DMatrix<f64>, target: Target, weights: WeightScheme) -> Result<Self> {
        let s = a.nrows();
        if s == 0 || a.ncols() == 0 {
            return Err(Error::invalid("hypothesis matrix must be non-empty"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("hypothesis matrix has non-finite entries"));
        }
        if linalg::rank(&a) != s {
            return Err(Error::invalid("hypothesis matrix must have full row rank"));
        }
        if let Target::Fixed(v) = &target {
            if v.len() != s {
                return Err(Error::invalid(format!(
                    "hypothesized value has length {}, expected {s}",
                    v.len()
                )));
            }
        }
        Ok(Self { a, target, weights })
    }

    /// Rows of the identity selecting `coords` out of `p` coefficients.
    pub fn selection_matrix(p: usize, coords: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&c) = coords.iter().find(|&&c| c >= p) {
            return Err(Error::invalid(format!("coordinate {c} out of range for p = {p}")));
        }
        Ok(DMatrix::from_fn(coords.len(), p, |r, c| {
            if coords[r] == c {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Tests whether the selected coefficients are time-invariant.
    pub fn constancy(p: usize, coords: &[usize], weights: WeightScheme) -> Result<Self> {
        Self::new(Self::selection_matrix(p, coords)?, Target::Estimate, weights)
    }

    /// Tests whether the selected coefficients vanish identically.
    pub fn significance(p: usize, coords: &[usize], weights: WeightScheme) -> Result<Self> {
        let a = Self::selection_matrix(p, coords)?;
        let zero = DVector::zeros(coords.len());
        Self::new(a, Target::Fixed(zero), weights)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn weights(&self) -> WeightScheme {
        self.weights
    }

    pub fn s(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn with_weights(&self, weights: WeightScheme) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_rank_deficient_rows() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(Hypothesis::new(a, Target::Estimate, WeightScheme::Identity).is_err());
    }

    #[test]
    fn selection_rows() {
        let h = Hypothesis::constancy(4, &[1, 3], WeightScheme::Identity).unwrap();
        assert_eq!(h.s(), 2);
        assert_eq!(h.a()[(0, 1)], 1.0);
        assert_eq!(h.a()[(1, 3)], 1.0);
        assert_eq!(h.a().sum(), 2.0);
        assert!(Hypothesis::constancy(2, &[2], WeightScheme::Identity).is_err());
    }

    #[test]
    fn fixed_target_length_checked() {
        let a = Hypothesis::selection_matrix(3, &[0]).unwrap();
        let bad = Target::Fixed(DVector::zeros(2));
        assert!(Hypothesis::new(a, bad, WeightScheme::Identity).is_err());
    }

    #[test]
    fn parses_scheme_names() {
        assert_eq!("W2".parse::<WeightScheme>().unwrap(), WeightScheme::Normalizer);
        assert!("l2".parse::<WeightScheme>().is_err());
    }
}
