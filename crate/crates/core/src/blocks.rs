//! Per-landmark Jacobian storage and the matrix-free normal-equation operators.
//!
//! Every landmark observed `k` times owns one dense row-major block of shape
//! `2k × 13`: for each observation two rows `[∂r/∂pose (9) | ∂r/∂point (3) | r (1)]`,
//! with observations sorted by camera index. `W = J_pᵀ J_l` is never formed;
//! its products are streamed from the blocks.
//!
//! Landmark-space outputs are computed per block and pose-space outputs per
//! camera (gathering that camera's observations in landmark order), so every
//! product is bitwise independent of the rayon thread count.

use std::fmt::Debug;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use nalgebra::{Cholesky, DVector, Matrix2x3, Matrix3, SMatrix, SVector, Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::bal_io::{BalProblem, State};
use crate::camera::{residual_and_jacobians, PoseJacobian};
use crate::reduced::{ReducedSystem, SolverError};
use crate::{BLOCK_COLS, POINT_DIM, POSE_DIM};

pub type Mat9 = SMatrix<f64, POSE_DIM, POSE_DIM>;
pub type Vec9 = SVector<f64, POSE_DIM>;

/// Bounds on the Marquardt scaling entries `D = sqrt(diag(JᵀJ))`.
pub const DAMPING_CLAMP: (f64, f64) = (1e-6, 1e6);

/// Storage precision of the landmark blocks. Arithmetic is always carried out
/// in `f64`; values are widened on load.
pub trait BlockScalar: Copy + Send + Sync + Debug + PartialEq + 'static {
    const BYTES: usize;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl BlockScalar for f64 {
    const BYTES: usize = 8;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl BlockScalar for f32 {
    const BYTES: usize = 4;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampingMode {
    /// `D² = diag(JᵀJ)` clamped, which makes λ scale-free.
    #[default]
    Jacobi,
    /// `D = I`.
    Identity,
}

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("landmark block: {0}")]
    MalformedBlock(String),
    #[error("damping must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("{kind} block {index} is not positive definite")]
    NotPositiveDefinite { kind: &'static str, index: usize },
    #[error("state has {cameras} cameras / {points} points, problem expects {expected_cameras} / {expected_points}")]
    StateMismatch { cameras: usize, points: usize, expected_cameras: usize, expected_points: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkBlock<T> {
    landmark: usize,
    cameras: Vec<usize>,
    data: Vec<T>,
}

impl<T: BlockScalar> LandmarkBlock<T> {
    /// `data` is row-major with 13 columns and two rows per camera;
    /// `cameras` must be strictly increasing.
    pub fn from_rows(landmark: usize, cameras: Vec<usize>, data: Vec<T>) -> Result<Self, AssemblyError> {
        if cameras.is_empty() {
            return Err(AssemblyError::MalformedBlock(format!("landmark {landmark} has no observations")));
        }
        if cameras.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AssemblyError::MalformedBlock(format!(
                "landmark {landmark}: camera indices not strictly increasing"
            )));
        }
        if data.len() != 2 * cameras.len() * BLOCK_COLS {
            return Err(AssemblyError::MalformedBlock(format!(
                "landmark {landmark}: {} scalars for {} observations",
                data.len(),
                cameras.len()
            )));
        }
        Ok(Self { landmark, cameras, data })
    }

    pub fn landmark_index(&self) -> usize {
        self.landmark
    }

    pub fn cameras(&self) -> &[usize] {
        &self.cameras
    }

    pub fn num_observations(&self) -> usize {
        self.cameras.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (2 * self.cameras.len(), BLOCK_COLS)
    }

    pub fn storage(&self) -> &[T] {
        &self.data
    }

    pub fn storage_bytes(&self) -> usize {
        self.data.len() * T::BYTES
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * BLOCK_COLS + col].to_f64()
    }

    #[inline]
    pub fn pose_jacobian(&self, obs: usize) -> PoseJacobian {
        PoseJacobian::from_fn(|i, j| self.at(2 * obs + i, j))
    }

    #[inline]
    pub fn point_jacobian(&self, obs: usize) -> Matrix2x3<f64> {
        Matrix2x3::from_fn(|i, j| self.at(2 * obs + i, POSE_DIM + j))
    }

    #[inline]
    pub fn residual(&self, obs: usize) -> Vector2<f64> {
        Vector2::new(self.at(2 * obs, BLOCK_COLS - 1), self.at(2 * obs + 1, BLOCK_COLS - 1))
    }

    fn point_normal_matrix(&self) -> Matrix3<f64> {
        (0..self.num_observations()).fold(Matrix3::zeros(), |acc, o| {
            let jl = self.point_jacobian(o);
            acc + jl.transpose() * jl
        })
    }

    fn point_gradient(&self) -> Vector3<f64> {
        (0..self.num_observations())
            .fold(Vector3::zeros(), |acc, o| acc + self.point_jacobian(o).transpose() * self.residual(o))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ObsRef {
    block: u32,
    obs: u32,
}

/// Undamped linearization at one state: landmark blocks plus the λ-independent
/// pieces of the normal equations.
#[derive(Debug, Clone)]
pub struct Linearization<T> {
    n_cameras: usize,
    blocks: Vec<LandmarkBlock<T>>,
    camera_obs: Vec<Vec<ObsRef>>,
    u0: Vec<Mat9>,
    v0: Vec<Matrix3<f64>>,
    b_p: DVector<f64>,
    b_l: DVector<f64>,
    jacobi_p: Vec<Vec9>,
    jacobi_l: Vec<Vector3<f64>>,
    invalid_observations: usize,
}

impl<T: BlockScalar> Linearization<T> {
    /// Evaluates residuals and Jacobians of every observation at `state` and
    /// packs them into landmark blocks. Observations with (near) zero depth
    /// contribute zero rows and are counted.
    pub fn assemble(problem: &BalProblem, state: &State) -> Result<Self, AssemblyError> {
        if state.cameras.len() != problem.num_cameras() || state.points.len() != problem.num_points() {
            return Err(AssemblyError::StateMismatch {
                cameras: state.cameras.len(),
                points: state.points.len(),
                expected_cameras: problem.num_cameras(),
                expected_points: problem.num_points(),
            });
        }
        let mut per_point: Vec<Vec<(usize, usize)>> = vec![Vec::new(); problem.num_points()];
        for (i, obs) in problem.observations().iter().enumerate() {
            per_point[obs.point].push((obs.camera, i));
        }

        let built: Vec<(LandmarkBlock<T>, usize)> = per_point
            .into_par_iter()
            .enumerate()
            .map(|(landmark, mut obs_list)| {
                obs_list.sort_unstable_by_key(|&(cam, _)| cam);
                let point = &state.points[landmark];
                let mut data = Vec::with_capacity(2 * obs_list.len() * BLOCK_COLS);
                let mut invalid = 0;
                for &(cam, obs_idx) in &obs_list {
                    let pixel = &problem.observations()[obs_idx].pixel;
                    match residual_and_jacobians(&state.cameras[cam], point, pixel) {
                        Ok((r, jac)) => {
                            for row in 0..2 {
                                data.extend(jac.pose.row(row).iter().map(|&v| T::from_f64(v)));
                                data.extend(jac.point.row(row).iter().map(|&v| T::from_f64(v)));
                                data.push(T::from_f64(r[row]));
                            }
                        }
                        Err(_) => {
                            invalid += 1;
                            data.extend(std::iter::repeat_n(T::from_f64(0.0), 2 * BLOCK_COLS));
                        }
                    }
                }
                let cameras = obs_list.iter().map(|&(c, _)| c).collect();
                (LandmarkBlock { landmark, cameras, data }, invalid)
            })
            .collect();

        let invalid_observations = built.iter().map(|(_, n)| n).sum();
        let blocks = built.into_iter().map(|(b, _)| b).collect();
        let mut lin = Self::from_blocks(problem.num_cameras(), blocks)?;
        lin.invalid_observations = invalid_observations;
        Ok(lin)
    }

    /// Builds the normal-equation pieces from existing blocks. Landmark-space
    /// vectors are indexed by block position.
    pub fn from_blocks(n_cameras: usize, blocks: Vec<LandmarkBlock<T>>) -> Result<Self, AssemblyError> {
        let mut camera_obs: Vec<Vec<ObsRef>> = vec![Vec::new(); n_cameras];
        for (b, block) in blocks.iter().enumerate() {
            for (o, &cam) in block.cameras.iter().enumerate() {
                if cam >= n_cameras {
                    return Err(AssemblyError::MalformedBlock(format!(
                        "landmark {} references camera {cam} of {n_cameras}",
                        block.landmark
                    )));
                }
                camera_obs[cam].push(ObsRef { block: b as u32, obs: o as u32 });
            }
        }
        // reduce in landmark order so results do not depend on block order
        for refs in &mut camera_obs {
            refs.sort_by_key(|r| blocks[r.block as usize].landmark);
        }

        let u0: Vec<Mat9> = camera_obs
            .par_iter()
            .map(|refs| {
                refs.iter().fold(Mat9::zeros(), |acc, r| {
                    let jp = blocks[r.block as usize].pose_jacobian(r.obs as usize);
                    acc + jp.transpose() * jp
                })
            })
            .collect();
        let mut b_p = DVector::zeros(POSE_DIM * n_cameras);
        b_p.as_mut_slice().par_chunks_mut(POSE_DIM).zip(camera_obs.par_iter()).for_each(|(chunk, refs)| {
            let acc = refs.iter().fold(Vec9::zeros(), |acc, r| {
                let block = &blocks[r.block as usize];
                acc + block.pose_jacobian(r.obs as usize).transpose() * block.residual(r.obs as usize)
            });
            chunk.copy_from_slice(acc.as_slice());
        });

        let v0: Vec<Matrix3<f64>> = blocks.par_iter().map(LandmarkBlock::point_normal_matrix).collect();
        let mut b_l = DVector::zeros(POINT_DIM * blocks.len());
        b_l.as_mut_slice()
            .par_chunks_mut(POINT_DIM)
            .zip(blocks.par_iter())
            .for_each(|(chunk, block)| chunk.copy_from_slice(block.point_gradient().as_slice()));

        let (lo, hi) = (DAMPING_CLAMP.0 * DAMPING_CLAMP.0, DAMPING_CLAMP.1 * DAMPING_CLAMP.1);
        let jacobi_p = u0.iter().map(|u| u.diagonal().map(|d| d.clamp(lo, hi))).collect();
        let jacobi_l = v0.iter().map(|v| v.diagonal().map(|d| d.clamp(lo, hi))).collect();

        Ok(Self { n_cameras, blocks, camera_obs, u0, v0, b_p, b_l, jacobi_p, jacobi_l, invalid_observations: 0 })
    }

    /// Keeps only the observation rows of `cameras` (sorted, re-indexed
    /// `0..cameras.len()`), dropping landmarks left without rows. Damping
    /// diagonals are inherited from `self` rather than recomputed.
    pub fn restrict(&self, cameras: &[usize]) -> Result<Self, AssemblyError> {
        let mut local = vec![usize::MAX; self.n_cameras];
        for (i, &c) in cameras.iter().enumerate() {
            if c >= self.n_cameras || (i > 0 && cameras[i - 1] >= c) {
                return Err(AssemblyError::MalformedBlock("cluster cameras must be sorted and in range".into()));
            }
            local[c] = i;
        }
        let mut kept_landmarks = Vec::new();
        let mut blocks = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let rows: Vec<usize> =
                (0..block.num_observations()).filter(|&o| local[block.cameras[o]] != usize::MAX).collect();
            if rows.is_empty() {
                continue;
            }
            let cams = rows.iter().map(|&o| local[block.cameras[o]]).collect();
            let mut data = Vec::with_capacity(rows.len() * 2 * BLOCK_COLS);
            for &o in &rows {
                data.extend_from_slice(&block.data[2 * o * BLOCK_COLS..2 * (o + 1) * BLOCK_COLS]);
            }
            blocks.push(LandmarkBlock { landmark: block.landmark, cameras: cams, data });
            kept_landmarks.push(b);
        }
        let mut sub = Self::from_blocks(cameras.len(), blocks)?;
        sub.jacobi_p = cameras.iter().map(|&c| self.jacobi_p[c]).collect();
        sub.jacobi_l = kept_landmarks.iter().map(|&b| self.jacobi_l[b]).collect();
        Ok(sub)
    }

    pub fn num_cameras(&self) -> usize {
        self.n_cameras
    }

    pub fn num_landmarks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_observations(&self) -> usize {
        self.blocks.iter().map(LandmarkBlock::num_observations).sum()
    }

    pub fn blocks(&self) -> &[LandmarkBlock<T>] {
        &self.blocks
    }

    pub fn b_p(&self) -> &DVector<f64> {
        &self.b_p
    }

    pub fn b_l(&self) -> &DVector<f64> {
        &self.b_l
    }

    pub fn invalid_observations(&self) -> usize {
        self.invalid_observations
    }

    /// `Σ 2k · 13 · sizeof(T)` over all landmark blocks.
    pub fn block_bytes(&self) -> usize {
        self.blocks.iter().map(LandmarkBlock::storage_bytes).sum()
    }

    /// Bytes of the λ-independent diagonal blocks, gradients, damping diagonals and camera index.
    pub fn auxiliary_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let n_p = self.n_cameras;
        let n_l = self.blocks.len();
        (n_p * POSE_DIM * POSE_DIM + n_l * POINT_DIM * POINT_DIM) * f
            + (self.b_p.len() + self.b_l.len()) * f
            + (n_p * POSE_DIM + n_l * POINT_DIM) * f
            + self.num_observations() * std::mem::size_of::<ObsRef>()
    }

    /// Damping entries `D²` for pose parameters of camera `c`.
    fn damping_p(&self, c: usize, mode: DampingMode) -> Vec9 {
        match mode {
            DampingMode::Jacobi => self.jacobi_p[c],
            DampingMode::Identity => Vec9::repeat(1.0),
        }
    }

    fn damping_l(&self, b: usize, mode: DampingMode) -> Vector3<f64> {
        match mode {
            DampingMode::Jacobi => self.jacobi_l[b],
            DampingMode::Identity => Vector3::repeat(1.0),
        }
    }

    /// Adds `λ D²` to the diagonal blocks and factorizes them.
    pub fn damped(&self, lambda: f64, mode: DampingMode) -> Result<DampedSystem<'_, T>, AssemblyError> {
        DampedSystem::new(self, lambda, mode)
    }
}

/// The damped normal equations of one LM iteration, in block form.
#[derive(Debug)]
pub struct DampedSystem<'a, T> {
    lin: &'a Linearization<T>,
    lambda: f64,
    mode: DampingMode,
    u: Vec<Mat9>,
    u_inv: Vec<Mat9>,
    v: Vec<Matrix3<f64>>,
    v_inv: Vec<Matrix3<f64>>,
    b_tilde: DVector<f64>,
    u_spectral: OnceLock<(Vec<Mat9>, f64)>,
    passes: AtomicUsize,
}

impl<'a, T: BlockScalar> DampedSystem<'a, T> {
    fn new(lin: &'a Linearization<T>, lambda: f64, mode: DampingMode) -> Result<Self, AssemblyError> {
        if !(lambda >= 0.0) {
            return Err(AssemblyError::NegativeLambda(lambda));
        }
        let damped_u: Vec<Result<(Mat9, Mat9), AssemblyError>> = (0..lin.n_cameras)
            .into_par_iter()
            .map(|c| {
                let mut u = lin.u0[c];
                u.set_diagonal(&(u.diagonal() + lin.damping_p(c, mode) * lambda));
                let inv = Cholesky::new(u).ok_or(AssemblyError::NotPositiveDefinite { kind: "U", index: c })?.inverse();
                Ok((u, inv))
            })
            .collect();
        let (u, u_inv): (Vec<_>, Vec<_>) = damped_u.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();

        let damped_v: Vec<Result<_, AssemblyError>> = (0..lin.blocks.len())
            .into_par_iter()
            .map(|b| {
                let mut v = lin.v0[b];
                v.set_diagonal(&(v.diagonal() + lin.damping_l(b, mode) * lambda));
                let inv = Cholesky::new(v).ok_or(AssemblyError::NotPositiveDefinite { kind: "V", index: b })?.inverse();
                Ok((v, inv))
            })
            .collect();
        let (v, v_inv): (Vec<_>, Vec<_>) = damped_v.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();

        let mut system = Self {
            lin,
            lambda,
            mode,
            u,
            u_inv,
            v,
            v_inv,
            b_tilde: DVector::zeros(0),
            u_spectral: OnceLock::new(),
            passes: AtomicUsize::new(0),
        };
        system.b_tilde = system.compute_b_tilde();
        system.reset_passes();
        Ok(system)
    }

    pub fn linearization(&self) -> &'a Linearization<T> {
        self.lin
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn damping_mode(&self) -> DampingMode {
        self.mode
    }

    pub fn num_cameras(&self) -> usize {
        self.lin.n_cameras
    }

    pub fn num_landmarks(&self) -> usize {
        self.lin.blocks.len()
    }

    pub fn u_blocks(&self) -> &[Mat9] {
        &self.u
    }

    pub fn v_blocks(&self) -> &[Matrix3<f64>] {
        &self.v
    }

    pub fn v_inv_blocks(&self) -> &[Matrix3<f64>] {
        &self.v_inv
    }

    pub fn b_p(&self) -> &DVector<f64> {
        &self.lin.b_p
    }

    pub fn b_l(&self) -> &DVector<f64> {
        &self.lin.b_l
    }

    /// Number of block-operator passes (products with U, U⁻¹, U^{-1/2}, V⁻¹,
    /// W or Wᵀ) since construction or the last reset.
    pub fn passes(&self) -> usize {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset_passes(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }

    fn count_pass(&self) {
        self.passes.fetch_add(1, Ordering::Relaxed);
    }

    /// Bytes held by the damped diagonal blocks, their inverses and `b̃`.
    pub fn damped_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        (2 * self.u.len() * POSE_DIM * POSE_DIM + 2 * self.v.len() * POINT_DIM * POINT_DIM + self.b_tilde.len()) * f
    }

    fn check(&self, v: &DVector<f64>, expected: usize) -> Result<(), SolverError> {
        if v.len() != expected {
            return Err(SolverError::DimensionMismatch { expected, got: v.len() });
        }
        Ok(())
    }

    /// `W v_l` (landmark space → pose space).
    pub fn apply_w(&self, v_l: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        self.check(v_l, POINT_DIM * self.num_landmarks())?;
        Ok(self.w_product(v_l))
    }

    /// `Wᵀ v_p` (pose space → landmark space).
    pub fn apply_wt(&self, v_p: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        self.check(v_p, POSE_DIM * self.num_cameras())?;
        Ok(self.wt_product(v_p))
    }

    /// Blockwise `V_λ⁻¹ v_l`.
    pub fn apply_v_inv(&self, v_l: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        self.check(v_l, POINT_DIM * self.num_landmarks())?;
        Ok(self.v_inv_product(v_l))
    }

    pub(crate) fn w_product(&self, v_l: &DVector<f64>) -> DVector<f64> {
        self.count_pass();
        let blocks = &self.lin.blocks;
        let mut out = DVector::zeros(POSE_DIM * self.num_cameras());
        out.as_mut_slice().par_chunks_mut(POSE_DIM).zip(self.lin.camera_obs.par_iter()).for_each(|(chunk, refs)| {
            let acc = refs.iter().fold(Vec9::zeros(), |acc, r| {
                let block = &blocks[r.block as usize];
                let o = r.obs as usize;
                let y = v_l.fixed_rows::<POINT_DIM>(POINT_DIM * r.block as usize);
                acc + block.pose_jacobian(o).transpose() * (block.point_jacobian(o) * y)
            });
            chunk.copy_from_slice(acc.as_slice());
        });
        out
    }

    pub(crate) fn wt_product(&self, v_p: &DVector<f64>) -> DVector<f64> {
        self.count_pass();
        let mut out = DVector::zeros(POINT_DIM * self.num_landmarks());
        out.as_mut_slice().par_chunks_mut(POINT_DIM).zip(self.lin.blocks.par_iter()).for_each(|(chunk, block)| {
            let acc = block.cameras.iter().enumerate().fold(Vector3::zeros(), |acc, (o, &cam)| {
                let x = v_p.fixed_rows::<POSE_DIM>(POSE_DIM * cam);
                acc + block.point_jacobian(o).transpose() * (block.pose_jacobian(o) * x)
            });
            chunk.copy_from_slice(acc.as_slice());
        });
        out
    }

    pub(crate) fn v_inv_product(&self, v_l: &DVector<f64>) -> DVector<f64> {
        self.count_pass();
        blockwise(&self.v_inv, v_l)
    }

    /// `b̃ = b_p - W V_λ⁻¹ b_l`.
    pub fn compute_b_tilde(&self) -> DVector<f64> {
        let mut out = self.lin.b_p.clone();
        out -= self.w_product(&self.v_inv_product(&self.lin.b_l));
        out
    }

    /// Diagonal 9×9 blocks of `S`: `U_c - Σ_l W_cl V_l⁻¹ W_clᵀ` (Schur-Jacobi).
    pub fn schur_diagonal_blocks(&self) -> Vec<Mat9> {
        let blocks = &self.lin.blocks;
        self.lin
            .camera_obs
            .par_iter()
            .enumerate()
            .map(|(c, refs)| {
                refs.iter().fold(self.u[c], |acc, r| {
                    let block = &blocks[r.block as usize];
                    let o = r.obs as usize;
                    let w = block.pose_jacobian(o).transpose() * block.point_jacobian(o);
                    acc - w * self.v_inv[r.block as usize] * w.transpose()
                })
            })
            .collect()
    }

    fn spectral_u(&self) -> &(Vec<Mat9>, f64) {
        self.u_spectral.get_or_init(|| {
            let parts: Vec<(Mat9, f64)> = self
                .u
                .par_iter()
                .map(|u| {
                    let eig = u.symmetric_eigen();
                    let inv_sqrt = eig.eigenvalues.map(|e| 1.0 / e.sqrt());
                    let q = eig.eigenvectors;
                    let min = eig.eigenvalues.min();
                    (q * Mat9::from_diagonal(&inv_sqrt) * q.transpose(), 1.0 / min)
                })
                .collect();
            let norm = parts.iter().fold(0.0_f64, |m, p| m.max(p.1));
            (parts.into_iter().map(|p| p.0).collect(), norm)
        })
    }
}

fn blockwise<const N: usize>(mats: &[SMatrix<f64, N, N>], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    out.as_mut_slice().par_chunks_mut(N).zip(mats.par_iter()).enumerate().for_each(|(i, (chunk, m))| {
        let y = m * v.fixed_rows::<N>(N * i);
        chunk.copy_from_slice(y.as_slice());
    });
    out
}

impl<T: BlockScalar> ReducedSystem for DampedSystem<'_, T> {
    fn pose_dim(&self) -> usize {
        POSE_DIM * self.num_cameras()
    }

    fn b_tilde(&self) -> &DVector<f64> {
        &self.b_tilde
    }

    fn apply_u(&self, v: &DVector<f64>) -> DVector<f64> {
        self.count_pass();
        blockwise(&self.u, v)
    }

    fn apply_u_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.count_pass();
        blockwise(&self.u_inv, v)
    }

    fn apply_u_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.count_pass();
        blockwise(&self.spectral_u().0, v)
    }

    fn apply_coupling(&self, v: &DVector<f64>) -> DVector<f64> {
        self.w_product(&self.v_inv_product(&self.wt_product(v)))
    }

    fn u_inv_norm(&self) -> f64 {
        self.spectral_u().1
    }
}
