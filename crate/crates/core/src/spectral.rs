//! Spectral diagnostics of the series operator `P = U_λ⁻¹ W V_λ⁻¹ Wᵀ`.
//!
//! `P` is similar to the symmetric positive semi-definite operator
//! `A = U_λ^{-1/2} W V_λ⁻¹ Wᵀ U_λ^{-1/2}`, so its spectral radius is the top
//! eigenvalue of `A` and can be estimated by power iteration on `A`. That
//! similarity also gives the truncation bound
//!
//! ```text
//! ‖x(m) - Δx_p‖₂ ≤ ρ^{m+1} / (1 - ρ) · ‖U_λ⁻¹‖ · ‖b̃‖₂.
//! ```

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseline::{dense_direct, DENSE_LIMIT};
use crate::power_series::PowerSeriesState;
use crate::reduced::{ReducedSystem, SolverError};

const START_SEED: u64 = 0x5eed;

/// Relative slack on the bound, plus a rounding floor relative to `‖Δx_p‖`.
pub const BOUND_SLACK: f64 = 1e-8;
pub const ROUNDING_FLOOR: f64 = 1e3 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Spectral radius of `P` (dense symmetric eigendecomposition).
    pub rho_p: f64,
    /// Power-iteration estimate of the same quantity.
    pub power_estimate: SpectralEstimate,
    pub tolerance: f64,
    /// `(m, ρ^{m+1}/(1-ρ) · ‖U_λ⁻¹‖ · ‖b̃‖)`.
    pub bound_curve: Vec<(usize, f64)>,
    /// `(m, ‖x(m) - Δx_p‖₂)`.
    pub measured_error_curve: Vec<(usize, f64)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BoundError {
    #[error("measured error {measured:e} exceeds bound {bound:e} at order {order}")]
    Violated { order: usize, measured: f64, bound: f64 },
    #[error("spectral radius {0} is not below 1")]
    RadiusNotBelowOne(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `A v = U^{-1/2} K U^{-1/2} v`.
pub fn apply_symmetrized<S: ReducedSystem + ?Sized>(system: &S, v: &DVector<f64>) -> DVector<f64> {
    system.apply_u_inv_sqrt(&system.apply_coupling(&system.apply_u_inv_sqrt(v)))
}

/// Power iteration on the symmetrized operator from a fixed-seed start.
/// Stops when successive Rayleigh quotients agree to relative `tol`.
pub fn estimate_spectral_radius<S: ReducedSystem + ?Sized>(system: &S, tol: f64, max_iter: usize) -> SpectralEstimate {
    let n = system.pose_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    v.normalize_mut();
    let mut estimate = 0.0;
    for iteration in 1..=max_iter {
        let av = apply_symmetrized(system, &v);
        let rayleigh = v.dot(&av);
        let norm = av.norm();
        if norm == 0.0 {
            return SpectralEstimate { rho: 0.0, iterations: iteration, converged: true };
        }
        let converged = iteration > 1 && (rayleigh - estimate).abs() <= tol * rayleigh.abs();
        estimate = rayleigh;
        if converged {
            return SpectralEstimate { rho: estimate, iterations: iteration, converged: true };
        }
        v = av / norm;
    }
    SpectralEstimate { rho: estimate, iterations: max_iter, converged: false }
}

/// Dense matrix of the symmetrized operator.
pub fn dense_symmetrized<S: ReducedSystem + ?Sized>(system: &S) -> Result<DMatrix<f64>, SolverError> {
    let n = system.pose_dim();
    if n > DENSE_LIMIT {
        return Err(SolverError::TooLarge { size: n, limit: DENSE_LIMIT });
    }
    let mut a = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        a.set_column(j, &apply_symmetrized(system, &e));
        e[j] = 0.0;
    }
    Ok((&a + a.transpose()) * 0.5)
}

/// All eigenvalues of `P`, ascending, via the symmetrized operator.
pub fn dense_eigenvalues<S: ReducedSystem + ?Sized>(system: &S) -> Result<Vec<f64>, SolverError> {
    let mut eig: Vec<f64> = dense_symmetrized(system)?.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn bound_at(rho: f64, order: usize, u_inv_norm: f64, b_tilde_norm: f64) -> f64 {
    rho.powi(order as i32 + 1) / (1.0 - rho) * u_inv_norm * b_tilde_norm
}

/// Compares `‖x(m) - Δx_p‖` against the truncation bound for every order up
/// to `max_order`, with `Δx_p` from the dense direct solve.
pub fn verify_error_bound<S: ReducedSystem + ?Sized>(
    system: &S,
    max_order: usize,
) -> Result<SpectralReport, BoundError> {
    let eigenvalues = dense_eigenvalues(system)?;
    let rho = eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    if rho >= 1.0 {
        return Err(BoundError::RadiusNotBelowOne(rho));
    }
    let tolerance = 1e-10;
    let power_estimate = estimate_spectral_radius(system, tolerance, 10_000);
    let exact = dense_direct(system)?;
    let u_inv_norm = system.u_inv_norm();
    let b_norm = system.b_tilde().norm();
    let floor = ROUNDING_FLOOR * exact.norm();

    let mut bound_curve = Vec::with_capacity(max_order + 1);
    let mut measured_error_curve = Vec::with_capacity(max_order + 1);
    let mut state = PowerSeriesState::start(system, &(-system.b_tilde()));
    loop {
        let m = state.order;
        let measured = (&state.x - &exact).norm();
        let bound = bound_at(rho, m, u_inv_norm, b_norm);
        if measured > bound * (1.0 + BOUND_SLACK) + floor {
            return Err(BoundError::Violated { order: m, measured, bound });
        }
        bound_curve.push((m, bound));
        measured_error_curve.push((m, measured));
        if m >= max_order {
            break;
        }
        state.advance(system);
    }
    Ok(SpectralReport { rho_p: rho, power_estimate, tolerance, bound_curve, measured_error_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduced::DenseReducedSystem;

    #[test]
    fn scalar_half_saturates_bound() {
        let sys = DenseReducedSystem::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, -1.0),
        )
        .unwrap();
        let report = verify_error_bound(&sys, 20).unwrap();
        assert_eq!(report.rho_p, 0.5);
        for ((m, bound), (_, measured)) in report.bound_curve.iter().zip(&report.measured_error_curve) {
            let expected = 0.5_f64.powi(*m as i32);
            assert_eq!(*bound, expected);
            assert!((measured - expected).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_coupling_has_zero_radius() {
        let sys =
            DenseReducedSystem::new(DMatrix::identity(4, 4) * 3.0, DMatrix::zeros(4, 4), DVector::from_element(4, 1.0))
                .unwrap();
        let est = estimate_spectral_radius(&sys, 1e-10, 100);
        assert_eq!(est.rho, 0.0);
        assert!(est.converged);
    }

    #[test]
    fn power_iteration_matches_dense_on_diagonal_case() {
        let u = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2, 3.0]));
        let sys = DenseReducedSystem::new(u, k, DVector::from_element(3, 1.0)).unwrap();
        let est = estimate_spectral_radius(&sys, 1e-14, 1000);
        assert!((est.rho - 0.75).abs() < 1e-10);
        let eig = dense_eigenvalues(&sys).unwrap();
        assert!((eig[2] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn bound_decreases_when_radius_below_one() {
        let curve: Vec<f64> = (0..20).map(|m| bound_at(0.9, m, 2.0, 3.0)).collect();
        assert!(curve.windows(2).all(|w| w[1] < w[0]));
    }
}
