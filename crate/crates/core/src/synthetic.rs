//! Deterministic synthetic BAL scenes.
//!
//! Observations are the exact projections of the generating scene plus
//! Gaussian pixel noise, so the generating state is close to optimal.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bal_io::{BalProblem, Observation};
use crate::camera::{project, CameraParams};

/// Camera at `center` whose optical axis (`-z` in the camera frame) points at `target`.
pub fn look_at(
    center: Vector3<f64>,
    target: Vector3<f64>,
    up: Vector3<f64>,
    focal: f64,
    k1: f64,
    k2: f64,
) -> CameraParams {
    let z = (center - target).normalize();
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let rotation = Rotation3::from_matrix_unchecked(r);
    CameraParams { rotation: rotation.scaled_axis(), translation: -(rotation * center), focal, k1, k2 }
}

fn observe(
    cameras: &[CameraParams],
    points: &[Vector3<f64>],
    tracks: &[Vec<usize>],
    pixel_noise: f64,
    rng: &mut ChaCha8Rng,
) -> BalProblem {
    let noise = Normal::new(0.0, pixel_noise.max(0.0)).expect("finite noise");
    let mut observations = Vec::new();
    for (point, track) in tracks.iter().enumerate() {
        for &camera in track {
            let mut pixel = project(&cameras[camera], &points[point]).expect("generated points lie in front");
            if pixel_noise > 0.0 {
                pixel.x += noise.sample(rng);
                pixel.y += noise.sample(rng);
            }
            observations.push(Observation { camera, point, pixel });
        }
    }
    observations.sort_by_key(|o| (o.camera, o.point));
    BalProblem::new(cameras.to_vec(), points.to_vec(), observations).expect("generated indices are valid").problem
}

/// `n_cameras` cameras on a circle of radius 10 looking at points scattered
/// in a ball of radius 2. Every point is seen by at least two cameras and
/// every camera sees at least one point.
pub fn ring_scene(n_cameras: usize, n_points: usize, pixel_noise: f64, seed: u64) -> BalProblem {
    assert!(n_cameras >= 2 && n_points >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cameras: Vec<CameraParams> = (0..n_cameras)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / n_cameras as f64;
            let center = Vector3::new(10.0 * theta.cos(), rng.random_range(-1.0..1.0), 10.0 * theta.sin());
            let focal = rng.random_range(450.0..550.0);
            let k1 = rng.random_range(-0.05..0.05);
            let k2 = rng.random_range(-0.01..0.01);
            look_at(center, Vector3::zeros(), Vector3::y(), focal, k1, k2)
        })
        .collect();
    let points: Vec<Vector3<f64>> = (0..n_points)
        .map(|_| loop {
            let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if p.norm() <= 2.0 {
                break p;
            }
        })
        .collect();
    let tracks: Vec<Vec<usize>> = (0..n_points)
        .map(|j| {
            let len = rng.random_range(2..=n_cameras);
            let mut track: Vec<usize> = sample(&mut rng, n_cameras, len).into_iter().collect();
            let anchor = j % n_cameras;
            if !track.contains(&anchor) {
                track[0] = anchor;
            }
            track.sort_unstable();
            track
        })
        .collect();
    observe(&cameras, &points, &tracks, pixel_noise, &mut rng)
}

/// A random small scene: 3 to 10 cameras, 10 to 50 points, 0.5 px noise.
pub fn random_small_problem(seed: u64) -> BalProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n_cameras = rng.random_range(3..=10);
    let n_points = rng.random_range(10..=50);
    ring_scene(n_cameras, n_points, 0.5, seed)
}

/// Three cameras and five landmarks, every landmark seen by every camera.
pub fn tiny_fixture() -> BalProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cameras: Vec<CameraParams> = [-0.6_f64, 0.0, 0.6]
        .iter()
        .map(|&a| {
            look_at(
                Vector3::new(8.0 * a.sin(), 0.3, 8.0 * a.cos()),
                Vector3::zeros(),
                Vector3::y(),
                500.0,
                0.01,
                -0.001,
            )
        })
        .collect();
    let points = vec![
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.5, -0.5),
        Vector3::new(-1.0, -0.4, 0.3),
        Vector3::new(0.4, -1.0, 0.8),
        Vector3::new(-0.6, 1.1, -0.9),
    ];
    let tracks = vec![vec![0, 1, 2]; points.len()];
    observe(&cameras, &points, &tracks, 0.5, &mut rng)
}

/// Two ring scenes far apart with no shared landmarks, so the camera
/// covisibility graph has exactly two connected components.
pub fn two_component_scene(cameras_each: usize, points_each: usize, seed: u64) -> BalProblem {
    let a = ring_scene(cameras_each, points_each, 0.5, seed);
    let b = ring_scene(cameras_each, points_each, 0.5, seed.wrapping_add(1));
    let shift = Vector3::new(100.0, 0.0, 0.0);
    let mut cameras = a.cameras().to_vec();
    // moving the world by `shift` changes t by -R·shift
    cameras.extend(b.cameras().iter().map(|c| {
        let mut c = *c;
        c.translation -= c.rotation_matrix() * shift;
        c
    }));
    let mut points = a.points().to_vec();
    points.extend(b.points().iter().map(|p| p + shift));
    let mut observations = a.observations().to_vec();
    observations.extend(b.observations().iter().map(|o| Observation {
        camera: o.camera + a.num_cameras(),
        point: o.point + a.num_points(),
        pixel: o.pixel,
    }));
    BalProblem::new(cameras, points, observations).expect("valid by construction").problem
}

pub const LADYBUG_CAMERAS: usize = 49;
pub const LADYBUG_POINTS: usize = 7776;

/// A street-level sequence with the dimensions of the Ladybug-49 problem:
/// 49 cameras moving along a street, yaw cycling through -40°, 0° and +40°,
/// and 7776 facade points on both sides, each seen by 2 to 8 cameras.
pub fn ladybug_like(seed: u64) -> BalProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let up = Vector3::z();
    let yaws = [-40.0_f64, 0.0, 40.0];
    let cameras: Vec<CameraParams> = (0..LADYBUG_CAMERAS)
        .map(|i| {
            let center = Vector3::new(i as f64, rng.random_range(-0.1..0.1), 1.5 + rng.random_range(-0.05..0.05));
            let yaw = yaws[i % 3].to_radians();
            let target = center + Vector3::new(yaw.cos(), yaw.sin(), 0.0);
            look_at(
                center,
                target,
                up,
                500.0 + rng.random_range(-20.0..20.0),
                rng.random_range(-0.1..0.0),
                rng.random_range(0.0..0.02),
            )
        })
        .collect();

    let visible = |point: &Vector3<f64>, camera: &CameraParams| {
        let p = camera.transform(point);
        let depth = -p.z;
        if !(1.0..=40.0).contains(&depth) {
            return false;
        }
        project(camera, point).is_ok_and(|px| px.x.abs() < 500.0 && px.y.abs() < 375.0)
    };

    let mut points = Vec::with_capacity(LADYBUG_POINTS);
    let mut tracks = Vec::with_capacity(LADYBUG_POINTS);
    while points.len() < LADYBUG_POINTS {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let point = Vector3::new(
            rng.random_range(-5.0..LADYBUG_CAMERAS as f64 + 15.0),
            side * rng.random_range(4.0..12.0),
            rng.random_range(0.0..8.0),
        );
        let seen: Vec<usize> = (0..LADYBUG_CAMERAS).filter(|&c| visible(&point, &cameras[c])).collect();
        if seen.len() < 2 {
            continue;
        }
        let len = rng.random_range(2..=seen.len().min(8));
        let mut track: Vec<usize> = sample(&mut rng, seen.len(), len).into_iter().map(|k| seen[k]).collect();
        track.sort_unstable();
        points.push(point);
        tracks.push(track);
    }
    let problem = observe(&cameras, &points, &tracks, 0.5, &mut rng);
    assert_eq!(problem.num_cameras(), LADYBUG_CAMERAS, "every camera must observe a point");
    problem
}
