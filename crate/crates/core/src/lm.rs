//! Levenberg-Marquardt driver.

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::bal_io::{BalProblem, State};
use crate::baseline::{dense_direct, pcg_power_series_preconditioner, pcg_schur_jacobi};
use crate::blocks::{AssemblyError, BlockScalar, DampedSystem, DampingMode, Linearization};
use crate::camera::project;
use crate::cluster::{cluster_cameras, solve_clustered, CameraClustering};
use crate::evalkit::{memory_account, solver_workspace_bytes};
use crate::power_series::{back_substitute, power_series_solve, SeriesOptions};
use crate::reduced::SolverError;
use crate::trace::{IterationRecord, SolverTrace};
use crate::{POINT_DIM, POSE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    Single,
    #[default]
    Double,
}

/// Solver for the reduced camera system inside each LM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolver {
    PowerSeries(SeriesOptions),
    /// CG with the Schur-Jacobi preconditioner.
    Pcg {
        tol: f64,
        max_iter: usize,
    },
    /// CG preconditioned by the series truncated at `order`.
    PcgPowerSeries {
        order: usize,
        tol: f64,
        max_iter: usize,
    },
    Direct,
    /// Power series per camera cluster.
    Clustered {
        series: SeriesOptions,
        max_cluster_size: usize,
    },
}

impl InnerSolver {
    pub fn pcg() -> Self {
        InnerSolver::Pcg { tol: 1e-6, max_iter: 500 }
    }

    pub fn power_series() -> Self {
        InnerSolver::PowerSeries(SeriesOptions::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub initial_lambda: f64,
    pub max_outer_iterations: usize,
    pub relative_function_tolerance: f64,
    /// λ ← λ / decrease after an accepted step.
    pub lambda_decrease: f64,
    /// λ ← λ · increase after a rejected step.
    pub lambda_increase: f64,
    pub damping: DampingMode,
    pub inner: InnerSolver,
    pub precision: Precision,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-4,
            max_outer_iterations: 50,
            relative_function_tolerance: 1e-6,
            lambda_decrease: 2.0,
            lambda_increase: 4.0,
            damping: DampingMode::Jacobi,
            inner: InnerSolver::power_series(),
            precision: Precision::Double,
        }
    }
}

impl LmConfig {
    pub fn with_inner(inner: InnerSolver) -> Self {
        Self { inner, ..Self::default() }
    }

    fn validate(&self) -> Result<(), LmError> {
        let positive = [
            ("initial_lambda", self.initial_lambda),
            ("relative_function_tolerance", self.relative_function_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(LmError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_decrease > 1.0 && self.lambda_increase > 1.0) {
            return Err(LmError::InvalidConfig("lambda factors must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite cost at iteration {iteration}")]
    NonFiniteCost { iteration: usize },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Accepted step with relative cost decrease below tolerance.
    Converged,
    /// Zero gradient at the linearization point.
    Stationary,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub trace: SolverTrace,
    pub state: State,
    pub termination: Termination,
}

impl LmResult {
    pub fn final_cost(&self) -> f64 {
        self.trace.final_cost().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEvaluation {
    /// `½ Σ ‖r_i‖²`.
    pub cost: f64,
    pub invalid_observations: usize,
}

pub fn evaluate_cost(problem: &BalProblem, state: &State) -> CostEvaluation {
    let mut sum = 0.0;
    let mut invalid = 0;
    for obs in problem.observations() {
        match project(&state.cameras[obs.camera], &state.points[obs.point]) {
            Ok(px) => sum += (px - obs.pixel).norm_squared(),
            Err(_) => invalid += 1,
        }
    }
    CostEvaluation { cost: 0.5 * sum, invalid_observations: invalid }
}

/// `x ⊞ Δx`: right-increment on rotations, addition elsewhere.
pub fn apply_update(state: &State, delta_p: &DVector<f64>, delta_l: &DVector<f64>) -> State {
    assert_eq!(delta_p.len(), POSE_DIM * state.cameras.len());
    assert_eq!(delta_l.len(), POINT_DIM * state.points.len());
    let cameras = state
        .cameras
        .iter()
        .enumerate()
        .map(|(c, cam)| cam.retract(delta_p.rows(POSE_DIM * c, POSE_DIM).as_slice()))
        .collect();
    let points = state
        .points
        .iter()
        .enumerate()
        .map(|(l, p)| p + Vector3::from_column_slice(delta_l.rows(POINT_DIM * l, POINT_DIM).as_slice()))
        .collect();
    State { cameras, points }
}

struct InnerResult {
    delta_p: DVector<f64>,
    inner_iterations: usize,
    order: usize,
    capped: bool,
}

fn solve_inner<T: BlockScalar>(
    system: &DampedSystem<'_, T>,
    inner: &InnerSolver,
    clustering: Option<&CameraClustering>,
) -> Result<InnerResult, SolverError> {
    Ok(match *inner {
        InnerSolver::PowerSeries(options) => {
            let sol = power_series_solve(system, options)?;
            InnerResult {
                delta_p: sol.delta_p,
                inner_iterations: sol.order_used,
                order: sol.order_used,
                capped: sol.capped,
            }
        }
        InnerSolver::Pcg { tol, max_iter } => {
            let report = pcg_schur_jacobi(system, tol, max_iter)?;
            InnerResult { delta_p: report.solution, inner_iterations: report.iterations, order: 0, capped: false }
        }
        InnerSolver::PcgPowerSeries { order, tol, max_iter } => {
            let report = pcg_power_series_preconditioner(system, order, tol, max_iter)?;
            InnerResult { delta_p: report.solution, inner_iterations: report.iterations, order, capped: false }
        }
        InnerSolver::Direct => {
            InnerResult { delta_p: dense_direct(system)?, inner_iterations: 0, order: 0, capped: false }
        }
        InnerSolver::Clustered { series, .. } => {
            let clustering = clustering.expect("clustering computed for clustered solver");
            let sol = solve_clustered(system, clustering, series)?;
            let order = sol.orders.iter().copied().max().unwrap_or(0);
            InnerResult { delta_p: sol.delta_p, inner_iterations: sol.orders.iter().sum(), order, capped: sol.capped }
        }
    })
}

/// Runs LM from the problem's stored parameters.
pub fn run(problem: &BalProblem, config: &LmConfig) -> Result<LmResult, LmError> {
    match config.precision {
        Precision::Double => run_with::<f64>(problem, config),
        Precision::Single => run_with::<f32>(problem, config),
    }
}

pub fn run_with<T: BlockScalar>(problem: &BalProblem, config: &LmConfig) -> Result<LmResult, LmError> {
    config.validate()?;
    let start = Instant::now();
    let clustering = match config.inner {
        InnerSolver::Clustered { max_cluster_size, .. } => Some(cluster_cameras(problem, max_cluster_size)?),
        _ => None,
    };

    let mut state = problem.initial_state();
    let initial = evaluate_cost(problem, &state);
    if !initial.cost.is_finite() {
        return Err(LmError::NonFiniteCost { iteration: 0 });
    }
    let mut cost = initial.cost;
    let mut lambda = config.initial_lambda;
    let mut trace = SolverTrace::default();
    trace.records.push(IterationRecord {
        iter: 0,
        cumulative_time_s: 0.0,
        cost,
        lambda,
        accepted: true,
        inner_iterations: 0,
        order_m: 0,
        series_capped: false,
        invalid_observations: initial.invalid_observations,
        peak_bytes: 0,
    });

    let mut lin = Linearization::<T>::assemble(problem, &state)?;
    let mut peak_bytes = 0;
    let mut termination = Termination::MaxIterations;

    for iter in 1..=config.max_outer_iterations {
        if lin.b_p().iter().all(|&v| v == 0.0) && lin.b_l().iter().all(|&v| v == 0.0) {
            trace.records.push(IterationRecord {
                iter,
                cumulative_time_s: start.elapsed().as_secs_f64(),
                cost,
                lambda,
                accepted: false,
                inner_iterations: 0,
                order_m: 0,
                series_capped: false,
                invalid_observations: lin.invalid_observations(),
                peak_bytes,
            });
            termination = Termination::Stationary;
            break;
        }

        let (trial, inner) = {
            let system = lin.damped(lambda, config.damping)?;
            let inner = solve_inner(&system, &config.inner, clustering.as_ref())?;
            let delta_l = back_substitute(&system, &inner.delta_p)?;
            let bytes = memory_account(&system).total() + solver_workspace_bytes(&config.inner, system.num_cameras());
            peak_bytes = peak_bytes.max(bytes);
            (apply_update(&state, &inner.delta_p, &delta_l), inner)
        };
        let trial_cost = evaluate_cost(problem, &trial);
        if !trial_cost.cost.is_finite() {
            return Err(LmError::NonFiniteCost { iteration: iter });
        }

        let accepted = trial_cost.cost < cost;
        let mut converged = false;
        if accepted {
            converged = (cost - trial_cost.cost) / cost < config.relative_function_tolerance;
            cost = trial_cost.cost;
            state = trial;
            lambda /= config.lambda_decrease;
        } else {
            lambda *= config.lambda_increase;
        }
        trace.records.push(IterationRecord {
            iter,
            cumulative_time_s: start.elapsed().as_secs_f64(),
            cost,
            lambda,
            accepted,
            inner_iterations: inner.inner_iterations,
            order_m: inner.order,
            series_capped: inner.capped,
            invalid_observations: trial_cost.invalid_observations,
            peak_bytes,
        });
        if converged {
            termination = Termination::Converged;
            break;
        }
        if accepted && iter < config.max_outer_iterations {
            lin = Linearization::assemble(problem, &state)?;
        }
    }
    Ok(LmResult { trace, state, termination })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bal_io::Observation;
    use crate::camera::CameraParams;
    use nalgebra::Vector2;

    fn one_observation_problem(pixel: Vector2<f64>) -> BalProblem {
        let cam =
            CameraParams { rotation: Vector3::zeros(), translation: Vector3::zeros(), focal: 1.0, k1: 0.0, k2: 0.0 };
        BalProblem::new(vec![cam], vec![Vector3::new(0.0, 0.0, -1.0)], vec![Observation { camera: 0, point: 0, pixel }])
            .unwrap()
            .problem
    }

    #[test]
    fn cost_of_single_residual() {
        let p = one_observation_problem(Vector2::new(-3.0, -4.0));
        assert_eq!(evaluate_cost(&p, &p.initial_state()).cost, 12.5);
    }

    #[test]
    fn zero_residual_costs_nothing() {
        let p = one_observation_problem(Vector2::zeros());
        assert_eq!(evaluate_cost(&p, &p.initial_state()).cost, 0.0);
    }

    #[test]
    fn invalid_observations_are_counted() {
        let cam =
            CameraParams { rotation: Vector3::zeros(), translation: Vector3::zeros(), focal: 1.0, k1: 0.0, k2: 0.0 };
        let p = BalProblem::new(
            vec![cam],
            vec![Vector3::new(1.0, 0.0, 0.0)],
            vec![Observation { camera: 0, point: 0, pixel: Vector2::new(5.0, 5.0) }],
        )
        .unwrap()
        .problem;
        let eval = evaluate_cost(&p, &p.initial_state());
        assert_eq!((eval.cost, eval.invalid_observations), (0.0, 1));
    }

    #[test]
    fn stationary_problem_stops_after_one_iteration() {
        let p = one_observation_problem(Vector2::zeros());
        let result = run(&p, &LmConfig::default()).unwrap();
        assert_eq!(result.termination, Termination::Stationary);
        assert_eq!(result.trace.records.len(), 2);
        assert_eq!(result.state, p.initial_state());
    }

    #[test]
    fn invalid_config_rejected() {
        let p = one_observation_problem(Vector2::zeros());
        let config = LmConfig { initial_lambda: 0.0, ..LmConfig::default() };
        assert!(matches!(run(&p, &config), Err(LmError::InvalidConfig(_))));
    }
}
