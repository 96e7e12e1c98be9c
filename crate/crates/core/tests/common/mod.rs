//! Dense reference implementation of the normal equations, built from an
//! explicitly materialized Jacobian. Used as an oracle for the block code.
#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, DVector};
use poba::camera::residual_and_jacobians;
use poba::{BalProblem, DampingMode, State};

pub struct DenseProblem {
    pub n_p: usize,
    pub n_l: usize,
    /// Stacked residual Jacobian, columns ordered `[poses | points]`.
    pub j: DMatrix<f64>,
    pub r: DVector<f64>,
}

impl DenseProblem {
    pub fn new(problem: &BalProblem, state: &State) -> Self {
        let n_p = problem.num_cameras();
        let n_l = problem.num_points();
        let m = 2 * problem.num_observations();
        let mut j = DMatrix::zeros(m, 9 * n_p + 3 * n_l);
        let mut r = DVector::zeros(m);
        for (i, obs) in problem.observations().iter().enumerate() {
            let Ok((res, jac)) =
                residual_and_jacobians(&state.cameras[obs.camera], &state.points[obs.point], &obs.pixel)
            else {
                continue;
            };
            r.rows_mut(2 * i, 2).copy_from(&res);
            j.view_mut((2 * i, 9 * obs.camera), (2, 9)).copy_from(&jac.pose);
            j.view_mut((2 * i, 9 * n_p + 3 * obs.point), (2, 3)).copy_from(&jac.point);
        }
        Self { n_p, n_l, j, r }
    }

    pub fn from_problem(problem: &BalProblem) -> Self {
        Self::new(problem, &problem.initial_state())
    }

    pub fn pose_dim(&self) -> usize {
        9 * self.n_p
    }

    pub fn normal(&self, lambda: f64, mode: DampingMode) -> DenseNormal {
        let h0 = self.j.transpose() * &self.j;
        let b = self.j.transpose() * &self.r;
        let d2 = match mode {
            DampingMode::Jacobi => h0.diagonal().map(|v| v.clamp(1e-12, 1e12)),
            DampingMode::Identity => DVector::from_element(h0.nrows(), 1.0),
        };
        let h = &h0 + DMatrix::from_diagonal(&(d2 * lambda));
        DenseNormal { np: self.pose_dim(), h, b }
    }
}

/// `H_λ Δx = -b` with its Schur reduction.
pub struct DenseNormal {
    pub np: usize,
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DenseNormal {
    pub fn u(&self) -> DMatrix<f64> {
        self.h.view((0, 0), (self.np, self.np)).into_owned()
    }

    pub fn w(&self) -> DMatrix<f64> {
        let nl = self.h.nrows() - self.np;
        self.h.view((0, self.np), (self.np, nl)).into_owned()
    }

    pub fn v(&self) -> DMatrix<f64> {
        let nl = self.h.nrows() - self.np;
        self.h.view((self.np, self.np), (nl, nl)).into_owned()
    }

    pub fn b_p(&self) -> DVector<f64> {
        self.b.rows(0, self.np).into_owned()
    }

    pub fn b_l(&self) -> DVector<f64> {
        self.b.rows(self.np, self.b.len() - self.np).into_owned()
    }

    pub fn v_inv(&self) -> DMatrix<f64> {
        Cholesky::new(self.v()).expect("V SPD").inverse()
    }

    pub fn schur(&self) -> DMatrix<f64> {
        let w = self.w();
        self.u() - &w * self.v_inv() * w.transpose()
    }

    pub fn b_tilde(&self) -> DVector<f64> {
        self.b_p() - self.w() * self.v_inv() * self.b_l()
    }

    /// Pose update from the reduced system.
    pub fn solve_reduced(&self) -> DVector<f64> {
        Cholesky::new(self.schur()).expect("S SPD").solve(&(-self.b_tilde()))
    }

    /// Full update from `H_λ` directly.
    pub fn solve_full(&self) -> DVector<f64> {
        Cholesky::new(self.h.clone()).expect("H SPD").solve(&(-&self.b))
    }

    /// `P = U⁻¹ W V⁻¹ Wᵀ` as a general (non-symmetric) matrix.
    pub fn series_operator(&self) -> DMatrix<f64> {
        let w = self.w();
        Cholesky::new(self.u()).expect("U SPD").inverse() * &w * self.v_inv() * w.transpose()
    }

    /// Eigenvalues of `P` from its real Schur form, as `(re, im)`.
    pub fn series_eigenvalues(&self) -> Vec<(f64, f64)> {
        self.series_operator().complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect()
    }
}

pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn seeded_vector(n: usize, seed: u64) -> DVector<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// A random camera and a point in front of it with normalized image
/// coordinates inside the unit disc.
pub fn random_configuration(seed: u64) -> (poba::CameraParams, nalgebra::Vector3<f64>, nalgebra::Vector2<f64>) {
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut unit =
        || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = unit();
    let translation = unit() * 5.0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let camera = poba::CameraParams {
        rotation: axis.normalize() * rng.random_range(0.0..std::f64::consts::PI),
        translation,
        focal: rng.random_range(300.0..800.0),
        k1: rng.random_range(-0.2..0.2),
        k2: rng.random_range(-0.05..0.05),
    };
    let depth = rng.random_range(2.0..20.0);
    let (px, py) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
    let p_cam = Vector3::new(-px * depth, -py * depth, -depth);
    let point = camera.rotation_matrix().inverse() * (p_cam - camera.translation);
    let observed = Vector2::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0));
    (camera, point, observed)
}

/// Largest violation of `|analytic - fd| ≤ max(1e-5, 1e-4·|fd|)` over the
/// 24 Jacobian entries, using central differences in the local
/// parameterization (right-multiplied rotation increment). Non-positive
/// means every entry passes.
pub fn finite_difference_violation(
    camera: &poba::CameraParams,
    point: &nalgebra::Vector3<f64>,
    observed: &nalgebra::Vector2<f64>,
) -> f64 {
    let (_, jac) = residual_and_jacobians(camera, point, observed).expect("valid configuration");
    jacobian_violation(&jac, camera, point, observed)
}

/// Same check for an arbitrary candidate Jacobian.
pub fn jacobian_violation(
    jac: &poba::camera::ObservationJacobians,
    camera: &poba::CameraParams,
    point: &nalgebra::Vector3<f64>,
    observed: &nalgebra::Vector2<f64>,
) -> f64 {
    let residual =
        |c: &poba::CameraParams, x: &nalgebra::Vector3<f64>| residual_and_jacobians(c, x, observed).unwrap().0;
    let params = camera.to_array();
    let mut worst = f64::NEG_INFINITY;
    let mut check = |analytic: f64, fd: f64| {
        worst = worst.max((analytic - fd).abs() - 1e-5_f64.max(1e-4 * fd.abs()));
    };
    for k in 0..9 {
        let h = 1e-6 * if k < 3 { 1.0 } else { params[k].abs().max(1.0) };
        let mut delta = [0.0; 9];
        delta[k] = h;
        let plus = residual(&camera.retract(&delta), point);
        delta[k] = -h;
        let minus = residual(&camera.retract(&delta), point);
        let fd = (plus - minus) / (2.0 * h);
        for row in 0..2 {
            check(jac.pose[(row, k)], fd[row]);
        }
    }
    for k in 0..3 {
        let h = 1e-6 * point[k].abs().max(1.0);
        let mut plus = *point;
        plus[k] += h;
        let mut minus = *point;
        minus[k] -= h;
        let fd = (residual(camera, &plus) - residual(camera, &minus)) / (2.0 * h);
        for row in 0..2 {
            check(jac.point[(row, k)], fd[row]);
        }
    }
    worst
}
