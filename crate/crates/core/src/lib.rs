//! Bundle adjustment on BAL problems with a power-series expansion of the
//! inverse Schur complement.
//!
//! The crate is organised bottom-up:
//!
//! - [`bal_io`]: BAL text format, perturbation, trace/summary persistence.
//! - [`camera`]: the BAL reprojection model with analytic Jacobians.
//! - [`blocks`]: per-landmark Jacobian storage and the matrix-free operators
//!   `U`, `V`, `W`, `Wᵀ` and the reduced camera system `S`.
//! - [`power_series`]: the inverse-expansion solver and landmark back-substitution.
//! - [`baseline`]: conjugate-gradient baselines and a dense direct oracle.
//! - [`lm`]: the Levenberg-Marquardt driver.
//! - [`cluster`]: camera clustering with per-cluster power-series solves.
//! - [`spectral`]: spectral-radius estimation and error-bound verification.
//! - [`evalkit`]: performance profiles, memory accounting, benchmark runs.
//! - [`synthetic`]: deterministic synthetic scenes used by tests and the CLI.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bal_io;
pub mod baseline;
pub mod blocks;
pub mod camera;
pub mod cluster;
pub mod evalkit;
pub mod lm;
pub mod power_series;
pub mod reduced;
pub mod spectral;
pub mod synthetic;
pub mod trace;

pub use bal_io::{parse_bal, perturb, write_bal, BalError, BalProblem, Observation, ParsedBal, State};
pub use blocks::{BlockScalar, DampedSystem, DampingMode, LandmarkBlock, Linearization};
pub use camera::CameraParams;
pub use lm::{InnerSolver, LmConfig, LmError, Precision};
pub use power_series::{power_series_solve, SeriesOptions, SeriesSolution};
pub use reduced::{DenseReducedSystem, ReducedSystem, SolverError};
pub use trace::{SolverTrace, TraceRow};

/// Parameters per camera: axis-angle rotation, translation, focal length, k1, k2.
pub const POSE_DIM: usize = 9;
/// Parameters per landmark.
pub const POINT_DIM: usize = 3;
/// Columns of a landmark block: pose Jacobian, landmark Jacobian, residual.
pub const BLOCK_COLS: usize = POSE_DIM + POINT_DIM + 1;
