//! Numerical toolkit for averaging of McKean-Vlasov equations driven by
//! multiplicative fractional Brownian motion with `H > 1/2`.
//!
//! * [`fbm`]: exact fBm samplers (Cholesky, circulant embedding) and the
//!   self-similar rescaling.
//! * [`metrics`]: sup, Hölder and λ-weighted norms; empirical measures and
//!   the one-dimensional `W₂` distance.
//! * [`frac`]: Weyl derivatives, the fractional integral `∫ f dg`, the Beta
//!   kernel identity and the Young bound monitor.
//! * [`solver`]: interacting particle schemes for the oscillatory and
//!   averaged equations, plus assumption validation.
//! * [`averaging`]: averaged drifts, the averaging-rate audit, the
//!   ε-convergence study and pathwise diagnostics.
//! * [`registry`], [`cli`]: named models and the `fbm-avg` front end.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

// `!(x > 0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod cli;
pub mod error;
pub mod fbm;
pub mod frac;
pub mod grid;
pub mod metrics;
pub mod quadrature;
pub mod registry;
pub mod rng;
pub mod scalar;
pub mod solver;

pub use averaging::{
    convergence_study, khasminskii_block_diagnostic, l2_path_norm, numeric_average_drift, phi_estimate,
    AveragingRateCurve, ConvergenceReport,
};
pub use error::{Error, Result};
pub use fbm::{covariance, sample_cholesky, sample_circulant, self_similar_rescale, FbmMethod};
pub use frac::{beta_kernel_integral, rs_sum, weyl_left, weyl_right_adjusted, young_bound_check, zahle_integral};
pub use metrics::{holder_norm, holder_seminorm, lambda_norm, sup_norm, wasserstein2};
pub use scalar::Real;
pub use solver::{coupled_solve, drift_increment, solve_averaged, solve_oscillatory, validate_assumptions, Scheme};

pub type TimeGrid = grid::TimeGrid<f64>;
pub type HurstParam = fbm::HurstParam<f64>;
pub type FbmBatch = fbm::FbmBatch<f64>;
pub type SamplePath = metrics::SamplePath<f64>;
pub type HolderExponent = metrics::HolderExponent<f64>;
pub type EmpiricalMeasure = metrics::EmpiricalMeasure<f64>;
pub type FracOrder = frac::FracOrder<f64>;
pub type ExponentTriple = frac::ExponentTriple<f64>;
pub type DriftModel = solver::DriftModel<f64>;
pub type DiffusionModel = solver::DiffusionModel<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type ParticleTrajectories = solver::ParticleTrajectories<f64>;
