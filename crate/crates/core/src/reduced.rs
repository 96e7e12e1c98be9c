//! The reduced camera system `S Δx_p = -b̃` seen through its operators.
//!
//! Solvers only need products with `U_λ`, `U_λ⁻¹`, `U_λ^{-1/2}` and the
//! coupling term `K = W V_λ⁻¹ Wᵀ`, so they are written against
//! [`ReducedSystem`]. The block-sparse [`DampedSystem`](crate::DampedSystem)
//! is the production implementation; [`DenseReducedSystem`] holds explicit
//! matrices and serves small checks.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite iterate at order {order}")]
    NonFinite { order: usize },
    #[error("iterate vanished at order {order} with a nonzero right-hand side")]
    ZeroIterate { order: usize },
    #[error("conjugate gradients broke down at iteration {iteration}: pᵀSp = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("dense solve limited to {limit} unknowns, system has {size}")]
    TooLarge { size: usize, limit: usize },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Assembly(#[from] crate::blocks::AssemblyError),
}

pub trait ReducedSystem: Sync {
    /// Length of the pose-space vectors (9 per camera for BA systems).
    fn pose_dim(&self) -> usize;

    /// `b̃ = b_p - W V_λ⁻¹ b_l`.
    fn b_tilde(&self) -> &DVector<f64>;

    fn apply_u(&self, v: &DVector<f64>) -> DVector<f64>;

    fn apply_u_inv(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `U_λ^{-1/2} v` with the symmetric square root.
    fn apply_u_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `W V_λ⁻¹ Wᵀ v`.
    fn apply_coupling(&self, v: &DVector<f64>) -> DVector<f64>;

    /// Spectral norm of `U_λ⁻¹`.
    fn u_inv_norm(&self) -> f64;

    /// `S v = U_λ v - W V_λ⁻¹ Wᵀ v`.
    fn apply_schur(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.apply_u(v);
        out -= self.apply_coupling(v);
        out
    }

    /// `P v = U_λ⁻¹ W V_λ⁻¹ Wᵀ v`, the operator whose powers form the series.
    fn apply_series_operator(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_u_inv(&self.apply_coupling(v))
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<(), SolverError> {
        if v.len() != self.pose_dim() {
            return Err(SolverError::DimensionMismatch { expected: self.pose_dim(), got: v.len() });
        }
        Ok(())
    }
}

/// Explicit dense `U_λ`, `K = W V_λ⁻¹ Wᵀ` and `b̃`.
#[derive(Debug, Clone)]
pub struct DenseReducedSystem {
    u: DMatrix<f64>,
    u_inv: DMatrix<f64>,
    u_inv_sqrt: DMatrix<f64>,
    u_inv_norm: f64,
    coupling: DMatrix<f64>,
    b_tilde: DVector<f64>,
}

impl DenseReducedSystem {
    pub fn new(u: DMatrix<f64>, coupling: DMatrix<f64>, b_tilde: DVector<f64>) -> Result<Self, SolverError> {
        let n = u.nrows();
        if u.ncols() != n || coupling.shape() != (n, n) || b_tilde.len() != n {
            return Err(SolverError::DimensionMismatch { expected: n, got: b_tilde.len() });
        }
        let eig = u.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&e| e <= 0.0) {
            return Err(SolverError::NotPositiveDefinite("U".into()));
        }
        let q = &eig.eigenvectors;
        let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e));
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt()));
        let u_inv = q * inv * q.transpose();
        let u_inv_sqrt = q * inv_sqrt * q.transpose();
        let u_inv_norm = eig.eigenvalues.iter().fold(0.0_f64, |m, &e| m.max(1.0 / e));
        Ok(Self { u, u_inv, u_inv_sqrt, u_inv_norm, coupling, b_tilde })
    }

    /// Schur complement `U_λ - K`.
    pub fn schur(&self) -> DMatrix<f64> {
        &self.u - &self.coupling
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }
}

impl ReducedSystem for DenseReducedSystem {
    fn pose_dim(&self) -> usize {
        self.u.nrows()
    }

    fn b_tilde(&self) -> &DVector<f64> {
        &self.b_tilde
    }

    fn apply_u(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.u * v
    }

    fn apply_u_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.u_inv * v
    }

    fn apply_u_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.u_inv_sqrt * v
    }

    fn apply_coupling(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.coupling * v
    }

    fn u_inv_norm(&self) -> f64 {
        self.u_inv_norm
    }
}
