//! Inverse Schur complement by power-series expansion.
//!
//! With `P = U_λ⁻¹ W V_λ⁻¹ Wᵀ`, whose eigenvalues lie in `[0, 1)`,
//!
//! ```text
//! S⁻¹ = Σ_{i≥0} Pⁱ U_λ⁻¹,     x(m) = -Σ_{i≤m} Pⁱ U_λ⁻¹ b̃ → Δx_p.
//! ```
//!
//! The recurrence keeps only the latest summand `tᵢ = P tᵢ₋₁` and the running
//! sum. Each order past the zeroth costs four block passes: Wᵀ, V⁻¹, W, U⁻¹.

use nalgebra::DVector;

use crate::blocks::{BlockScalar, DampedSystem};
use crate::reduced::{ReducedSystem, SolverError};
use crate::POINT_DIM;

/// Stop threshold and order cap. Defaults: ε = 0.01, 20 orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub epsilon: f64,
    pub max_order: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { epsilon: 0.01, max_order: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSolution {
    pub delta_p: DVector<f64>,
    pub order_used: usize,
    /// `max_order` was reached without meeting the stop criterion.
    pub capped: bool,
}

/// Iterates of the expansion: the running sum `x(i)` and the last summand.
#[derive(Debug, Clone)]
pub struct PowerSeriesState {
    pub order: usize,
    pub x: DVector<f64>,
    pub term: DVector<f64>,
}

impl PowerSeriesState {
    /// Order zero for right-hand side `rhs`: `x(0) = t₀ = U_λ⁻¹ rhs`.
    pub fn start<S: ReducedSystem + ?Sized>(system: &S, rhs: &DVector<f64>) -> Self {
        let term = system.apply_u_inv(rhs);
        Self { order: 0, x: term.clone(), term }
    }

    /// Advances one order: `tᵢ = P tᵢ₋₁`, `x(i) = x(i-1) + tᵢ`.
    pub fn advance<S: ReducedSystem + ?Sized>(&mut self, system: &S) {
        self.term = system.apply_series_operator(&self.term);
        self.x += &self.term;
        self.order += 1;
    }
}

/// `(i + 1) · step_norm / x_norm < ε`, with `step_norm = ‖x(i) - x(i-1)‖`.
pub fn stop_criterion_norms(order: usize, step_norm: f64, x_norm: f64, epsilon: f64) -> bool {
    (order as f64 + 1.0) * step_norm / x_norm < epsilon
}

pub fn stop_criterion(x_i: &DVector<f64>, x_prev: &DVector<f64>, order: usize, epsilon: f64) -> bool {
    stop_criterion_norms(order, (x_i - x_prev).norm(), x_i.norm(), epsilon)
}

/// `S̃₋₁(m) · rhs = Σ_{i≤m} Pⁱ U_λ⁻¹ rhs` at a fixed order.
pub fn apply_truncated_inverse<S: ReducedSystem + ?Sized>(
    system: &S,
    rhs: &DVector<f64>,
    order: usize,
) -> DVector<f64> {
    let mut state = PowerSeriesState::start(system, rhs);
    while state.order < order {
        state.advance(system);
    }
    state.x
}

/// `x(m) = -S̃₋₁(m) b̃`.
pub fn series_iterate<S: ReducedSystem + ?Sized>(system: &S, order: usize) -> DVector<f64> {
    apply_truncated_inverse(system, &(-system.b_tilde()), order)
}

/// Solves `S Δx_p = -b̃` by the truncated expansion, stopping at the first
/// order `i ≥ 1` that meets the stop criterion or at `max_order`.
pub fn power_series_solve<S: ReducedSystem + ?Sized>(
    system: &S,
    options: SeriesOptions,
) -> Result<SeriesSolution, SolverError> {
    if !(options.epsilon > 0.0) {
        return Err(SolverError::InvalidParameter(format!("epsilon must be positive, got {}", options.epsilon)));
    }
    if options.max_order < 1 {
        return Err(SolverError::InvalidParameter("max_order must be at least 1".into()));
    }
    let b_tilde = system.b_tilde();
    if b_tilde.iter().all(|&v| v == 0.0) {
        return Ok(SeriesSolution { delta_p: DVector::zeros(b_tilde.len()), order_used: 0, capped: false });
    }

    let mut state = PowerSeriesState::start(system, &(-b_tilde));
    check_finite(&state.x, 0)?;
    while state.order < options.max_order {
        state.advance(system);
        check_finite(&state.x, state.order)?;
        let x_norm = state.x.norm();
        if x_norm == 0.0 {
            return Err(SolverError::ZeroIterate { order: state.order });
        }
        if stop_criterion_norms(state.order, state.term.norm(), x_norm, options.epsilon) {
            return Ok(SeriesSolution { delta_p: state.x, order_used: state.order, capped: false });
        }
    }
    Ok(SeriesSolution { delta_p: state.x, order_used: state.order, capped: true })
}

fn check_finite(x: &DVector<f64>, order: usize) -> Result<(), SolverError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::NonFinite { order })
    }
}

/// Landmark update from the second block row of `H Δx = -b`:
/// `Δx_l = -V_λ⁻¹ (b_l + Wᵀ Δx_p)`.
pub fn back_substitute<T: BlockScalar>(
    system: &DampedSystem<'_, T>,
    delta_p: &DVector<f64>,
) -> Result<DVector<f64>, SolverError> {
    let mut rhs = system.apply_wt(delta_p)?;
    rhs += system.b_l();
    debug_assert_eq!(rhs.len(), POINT_DIM * system.num_landmarks());
    let mut delta_l = system.apply_v_inv(&rhs)?;
    delta_l.neg_mut();
    Ok(delta_l)
}
