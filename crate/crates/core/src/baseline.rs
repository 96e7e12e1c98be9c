//! Baseline solvers for the reduced camera system: preconditioned conjugate
//! gradients (Schur-Jacobi or power-series preconditioner) and a dense
//! Cholesky oracle.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::blocks::{BlockScalar, DampedSystem, Mat9};
use crate::power_series::apply_truncated_inverse;
use crate::reduced::{ReducedSystem, SolverError};
use crate::POSE_DIM;

/// Largest system [`dense_direct`] will materialize.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// `sqrt(rᵀM⁻¹r / r₀ᵀM⁻¹r₀)` at exit.
    pub final_relative_residual: f64,
}

pub trait Preconditioner: Sync {
    /// `z = M⁻¹ r`.
    fn apply(&self, r: &DVector<f64>) -> DVector<f64>;
}

/// Inverted 9×9 diagonal blocks of `S`.
pub struct SchurJacobi {
    inverses: Vec<Mat9>,
}

impl SchurJacobi {
    pub fn new<T: BlockScalar>(system: &DampedSystem<'_, T>) -> Result<Self, SolverError> {
        let inverses = system
            .schur_diagonal_blocks()
            .into_par_iter()
            .enumerate()
            .map(|(c, block)| {
                Cholesky::new(block)
                    .map(|ch| ch.inverse())
                    .ok_or_else(|| SolverError::NotPositiveDefinite(format!("Schur diagonal block {c}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { inverses })
    }
}

impl Preconditioner for SchurJacobi {
    fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(r.len());
        out.as_mut_slice().par_chunks_mut(POSE_DIM).zip(self.inverses.par_iter()).enumerate().for_each(
            |(c, (chunk, inv))| {
                chunk.copy_from_slice((inv * r.fixed_rows::<POSE_DIM>(POSE_DIM * c)).as_slice());
            },
        );
        out
    }
}

/// `M⁻¹ = S̃₋₁(m)`, the expansion truncated at a fixed order.
pub struct PowerSeriesPreconditioner<'s, S: ?Sized> {
    system: &'s S,
    order: usize,
}

impl<'s, S: ReducedSystem + ?Sized> PowerSeriesPreconditioner<'s, S> {
    pub fn new(system: &'s S, order: usize) -> Self {
        Self { system, order }
    }
}

impl<S: ReducedSystem + ?Sized> Preconditioner for PowerSeriesPreconditioner<'_, S> {
    fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        apply_truncated_inverse(self.system, r, self.order)
    }
}

/// `M⁻¹ = U_λ⁻¹`.
pub struct BlockJacobiU<'s, S: ?Sized> {
    system: &'s S,
}

impl<'s, S: ReducedSystem + ?Sized> BlockJacobiU<'s, S> {
    pub fn new(system: &'s S) -> Self {
        Self { system }
    }
}

impl<S: ReducedSystem + ?Sized> Preconditioner for BlockJacobiU<'_, S> {
    fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        self.system.apply_u_inv(r)
    }
}

/// Preconditioned CG on `S x = -b̃` from `x₀ = 0`. `observer` sees every
/// iterate `(k, x_k)`, including `x₀`.
pub fn pcg<S, M, F>(
    system: &S,
    preconditioner: &M,
    tol: f64,
    max_iter: usize,
    mut observer: F,
) -> Result<CgReport, SolverError>
where
    S: ReducedSystem + ?Sized,
    M: Preconditioner + ?Sized,
    F: FnMut(usize, &DVector<f64>),
{
    if !(tol > 0.0) {
        return Err(SolverError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = system.pose_dim();
    let mut x = DVector::zeros(n);
    observer(0, &x);
    let mut r = -system.b_tilde();
    let mut z = preconditioner.apply(&r);
    let mut rz = r.dot(&z);
    let rz0 = rz;
    if rz0 == 0.0 {
        return Ok(CgReport { solution: x, iterations: 0, final_relative_residual: 0.0 });
    }
    let mut p = z.clone();
    let mut relative = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        let sp = system.apply_schur(&p);
        let curvature = p.dot(&sp);
        if !(curvature > 0.0) {
            return Err(SolverError::Breakdown { iteration: iterations, curvature });
        }
        let alpha = rz / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &sp, 1.0);
        iterations += 1;
        observer(iterations, &x);

        z = preconditioner.apply(&r);
        let rz_next = r.dot(&z);
        relative = (rz_next.max(0.0) / rz0).sqrt();
        if relative < tol {
            break;
        }
        let beta = rz_next / rz;
        rz = rz_next;
        p *= beta;
        p += &z;
    }
    Ok(CgReport { solution: x, iterations, final_relative_residual: relative })
}

pub fn pcg_schur_jacobi<T: BlockScalar>(
    system: &DampedSystem<'_, T>,
    tol: f64,
    max_iter: usize,
) -> Result<CgReport, SolverError> {
    let preconditioner = SchurJacobi::new(system)?;
    pcg(system, &preconditioner, tol, max_iter, |_, _| {})
}

pub fn pcg_power_series_preconditioner<S: ReducedSystem + ?Sized>(
    system: &S,
    order: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CgReport, SolverError> {
    pcg(system, &PowerSeriesPreconditioner::new(system, order), tol, max_iter, |_, _| {})
}

/// Materializes `S` column by column from operator products.
pub fn dense_schur<S: ReducedSystem + ?Sized>(system: &S) -> Result<DMatrix<f64>, SolverError> {
    let n = system.pose_dim();
    if n > DENSE_LIMIT {
        return Err(SolverError::TooLarge { size: n, limit: DENSE_LIMIT });
    }
    let mut s = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        s.set_column(j, &system.apply_schur(&e));
        e[j] = 0.0;
    }
    Ok((&s + s.transpose()) * 0.5)
}

/// Dense Cholesky solve of `S Δx_p = -b̃`.
pub fn dense_direct<S: ReducedSystem + ?Sized>(system: &S) -> Result<DVector<f64>, SolverError> {
    let s = dense_schur(system)?;
    let chol = Cholesky::new(s).ok_or_else(|| SolverError::NotPositiveDefinite("dense Schur complement".into()))?;
    Ok(chol.solve(&(-system.b_tilde())))
}
