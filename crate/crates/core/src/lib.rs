//! Forecasting collections of nonnegative time series by masked
//! nonnegative matrix factorization.
//!
//! The crate recasts the forecast of N series over F future timestamps as a
//! matrix completion problem: the timeline is rearranged by a sliding block
//! operator, the unknown future becomes a hidden rectangle, and a constrained
//! low-rank factorization fills it in. Two pipelines are provided:
//!
//! * [`smm`] — the sliding-mask pipeline: build the masked problem, solve it
//!   with one of the four iterative solvers, read the forecast back out, and
//!   cross-validate rank/window/penalty choices.
//! * [`lcf`] — the latent clustered forecast: factorize once, cluster series
//!   by their weight rows, factorize per cluster and forecast the latent
//!   profiles with a pluggable regressor.
//!
//! All numerics are generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the `*F64` aliases below pin the common case.

pub mod error;
pub mod hull;
pub mod lcf;
pub mod linalg;
pub mod masking;
pub mod nnls;
pub mod scalar;
pub mod simplex;
pub mod smm;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use hull::{project_convex_hull, HullConfig, HullProjection};
pub use linalg::frobenius;
pub use masking::{apply_sliding, unslide, MaskedProblem, SlidingGeometry, SplitViews};
pub use nnls::nnls_row;
pub use simplex::{project_simplex, SimplexVector};
pub use smm::{
    cross_validate, rmpe, rrmse, smm_forecast, ForecastReport, Program, SeriesMatrix, SmmConfig,
};
pub use solver::{
    init_random, kkt_residual, kkt_residual_for_problem, should_stop, solve, solve_als,
    solve_hals, solve_ipalm, solve_palm,
    solve_subsampled, ConstraintProfile, Diagnostics, Factorization, Schedule, SolverConfig,
    SolverKind, StopReason,
};

/// Dense matrix of the generic scalar.
pub type Mat<S> = ndarray::Array2<S>;
/// Dense vector of the generic scalar.
pub type Vector<S> = ndarray::Array1<S>;

pub type MatF64 = Mat<f64>;
pub type MatF32 = Mat<f32>;
pub type MaskedProblemF64 = MaskedProblem<f64>;
pub type MaskedProblemF32 = MaskedProblem<f32>;
pub type FactorizationF64 = Factorization<f64>;
pub type FactorizationF32 = Factorization<f32>;
pub type SolverConfigF64 = SolverConfig<f64>;
pub type SolverConfigF32 = SolverConfig<f32>;
pub type ForecastReportF64 = ForecastReport<f64>;
pub type SeriesMatrixF64 = SeriesMatrix<f64>;
