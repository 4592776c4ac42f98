//! Generalized Gaussian process models for panels of binary time series
//! observed at a set of input sites.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix the common `f64` case.

pub mod error;
pub mod estimation;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod logitnormal;
pub mod metrics;
pub mod optim;
pub mod panel;
pub mod prediction;
pub mod quadrature;
pub mod scalar;
pub mod seed;
pub mod simgen;
pub mod studies;

pub use error::{Error, Result};
pub use estimation::{fit, Coefficients, ConvergenceReport, CovParams, FitOptions, FitState, FittedModel};
pub use kernel::{corr_matrix, cross_corr, CorrMatrix, KernelFamily, KernelSpec};
pub use logitnormal::LogitNormal;
pub use panel::{build_design, BinaryPanel, DesignMatrix, InputDesign, ModelOrder, ProbPanel};
pub use scalar::Scalar;

pub type Model = FittedModel<f64>;
pub type Inputs = InputDesign<f64>;
pub type Kernel = KernelSpec<f64>;
pub type Options = FitOptions<f64>;
