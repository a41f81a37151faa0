//! Estimation, hypothesis testing and variable selection for linear
//! regression models whose coefficients vary smoothly in rescaled time,
//! with dependent and nonstationary covariates and errors.

pub mod cli;
pub mod covariance;
pub mod data;
pub mod error;
pub mod hypothesis;
pub mod kernels;
pub mod linalg;
pub mod locfit;
pub mod normal;
pub mod processes;
pub mod rng;
pub mod selection;
pub mod testing;

pub use data::{EvaluationGrid, RegressionData};
pub use error::{Error, Result};
pub use hypothesis::{Hypothesis, Target, WeightScheme};
pub use kernels::{Kernel, KernelConstants};
pub use locfit::{local_linear_fit, LocalLinearFit};
