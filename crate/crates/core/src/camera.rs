//! BAL camera model.
//!
//! A world point `X` maps to camera coordinates `P = R(ω)·X + t`; the camera
//! looks down its negative z axis, so the normalized image point is
//! `p = -(P_x / P_z, P_y / P_z)` and the pixel is `f · (1 + k1‖p‖² + k2‖p‖⁴) · p`.
//!
//! Rotation increments are applied on the right: `R ← R(ω)·Exp(δ)`. All
//! pose Jacobians are taken with respect to that local parameterization, in
//! the order `[δω (3), δt (3), δf, δk1, δk2]`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Rotation3, SMatrix, SVector, Vector2, Vector3};

use crate::POSE_DIM;

/// Observations whose camera-frame depth magnitude falls below this are invalid.
pub const MIN_DEPTH: f64 = 1e-12;

pub type PoseJacobian = SMatrix<f64, 2, POSE_DIM>;
pub type PointJacobian = Matrix2x3<f64>;
pub type PoseVector = SVector<f64, POSE_DIM>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    /// Axis-angle rotation (radians times unit axis).
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
    /// Focal length in pixels.
    pub focal: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Derivatives of one observation's residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationJacobians {
    pub pose: PoseJacobian,
    pub point: PointJacobian,
}

/// Raised when a point lands on the camera plane.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("point projects with depth {depth:e}, below the validity threshold")]
pub struct InvalidObservation {
    pub depth: f64,
}

impl CameraParams {
    pub fn from_array(v: &[f64; POSE_DIM]) -> Self {
        Self {
            rotation: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
            focal: v[6],
            k1: v[7],
            k2: v[8],
        }
    }

    pub fn to_array(&self) -> [f64; POSE_DIM] {
        [
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.focal,
            self.k1,
            self.k2,
        ]
    }

    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        Rotation3::new(self.rotation)
    }

    /// Maps a rotation vector with norm ≥ 2π onto the equivalent one with
    /// norm ≤ π. Shorter vectors are returned untouched.
    pub fn canonicalized(mut self) -> Self {
        if self.rotation.norm() >= 2.0 * PI {
            self.rotation = Rotation3::new(self.rotation).scaled_axis();
        }
        self
    }

    /// Applies a local increment: right-multiplied rotation, additive elsewhere.
    pub fn retract(&self, delta: &[f64]) -> Self {
        debug_assert_eq!(delta.len(), POSE_DIM);
        let rotation = self.rotation_matrix() * Rotation3::new(Vector3::new(delta[0], delta[1], delta[2]));
        Self {
            rotation: rotation.scaled_axis(),
            translation: self.translation + Vector3::new(delta[3], delta[4], delta[5]),
            focal: self.focal + delta[6],
            k1: self.k1 + delta[7],
            k2: self.k2 + delta[8],
        }
    }

    /// Camera-frame coordinates of a world point.
    pub fn transform(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * point + self.translation
    }
}

pub fn project(camera: &CameraParams, point: &Vector3<f64>) -> Result<Vector2<f64>, InvalidObservation> {
    let p_cam = camera.transform(point);
    if p_cam.z.abs() < MIN_DEPTH {
        return Err(InvalidObservation { depth: p_cam.z });
    }
    let p = Vector2::new(-p_cam.x / p_cam.z, -p_cam.y / p_cam.z);
    let n2 = p.norm_squared();
    let distortion = 1.0 + camera.k1 * n2 + camera.k2 * n2 * n2;
    Ok(p * (camera.focal * distortion))
}

/// Residual `project(camera, point) - observed` and its analytic Jacobians.
pub fn residual_and_jacobians(
    camera: &CameraParams,
    point: &Vector3<f64>,
    observed: &Vector2<f64>,
) -> Result<(Vector2<f64>, ObservationJacobians), InvalidObservation> {
    let rotation = camera.rotation_matrix();
    let rotated = rotation * point;
    let p_cam = rotated + camera.translation;
    let z = p_cam.z;
    if z.abs() < MIN_DEPTH {
        return Err(InvalidObservation { depth: z });
    }

    let p = Vector2::new(-p_cam.x / z, -p_cam.y / z);
    let n2 = p.norm_squared();
    let distortion = 1.0 + camera.k1 * n2 + camera.k2 * n2 * n2;
    let f = camera.focal;
    let residual = p * (f * distortion) - observed;

    // d(pixel)/dp = f (d I + (2 k1 + 4 k2 n²) p pᵀ)
    let radial = 2.0 * camera.k1 + 4.0 * camera.k2 * n2;
    let dpixel_dp = (Matrix2::identity() * distortion + p * p.transpose() * radial) * f;
    let inv_z = 1.0 / z;
    let dp_dpcam = Matrix2x3::new(-inv_z, 0.0, p_cam.x * inv_z * inv_z, 0.0, -inv_z, p_cam.y * inv_z * inv_z);
    let dpixel_dpcam = dpixel_dp * dp_dpcam;

    // dP/dδω = -R [X]ₓ for the right increment.
    let rot_mat = rotation.matrix();
    let dpcam_drot = -(rot_mat * point.cross_matrix());
    let d_rot = dpixel_dpcam * dpcam_drot;

    let mut pose = PoseJacobian::zeros();
    pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_rot);
    pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&dpixel_dpcam);
    pose.set_column(6, &(p * distortion));
    pose.set_column(7, &(p * (f * n2)));
    pose.set_column(8, &(p * (f * n2 * n2)));

    let point_jac = dpixel_dpcam * rot_mat;
    Ok((residual, ObservationJacobians { pose, point: point_jac }))
}
