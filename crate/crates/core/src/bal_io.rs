//! BAL problem files: parsing, canonical serialization and perturbation.
//!
//! Layout (whitespace separated, any line breaking):
//!
//! ```text
//! n_cameras n_points n_observations
//! cam_idx pt_idx px py          (n_observations times)
//! 9 scalars per camera          (ω, t, f, k1, k2)
//! 3 scalars per point
//! ```

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::camera::CameraParams;
use crate::{POINT_DIM, POSE_DIM};

#[derive(Debug, Error)]
pub enum BalError {
    #[error("line {line}: unexpected end of input while reading {expected}")]
    Truncated { line: usize, expected: &'static str },
    #[error("line {line}: cannot parse `{token}` as {expected}")]
    BadNumber { line: usize, token: String, expected: &'static str },
    #[error("line {line}: {what} index {index} out of range (count {count})")]
    IndexOutOfRange { line: usize, what: &'static str, index: usize, count: usize },
    #[error("line {line}: duplicate observation of point {point} by camera {camera}")]
    DuplicateObservation { line: usize, camera: usize, point: usize },
    #[error("line {line}: camera {camera} has non-positive focal length {focal}")]
    InvalidFocal { line: usize, camera: usize, focal: f64 },
    #[error("noise standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub camera: usize,
    pub point: usize,
    /// Observed pixel coordinates.
    pub pixel: Vector2<f64>,
}

/// Parameters being optimized: every camera and every landmark position.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub cameras: Vec<CameraParams>,
    pub points: Vec<Vector3<f64>>,
}

/// A validated BAL problem. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct BalProblem {
    cameras: Vec<CameraParams>,
    points: Vec<Vector3<f64>>,
    observations: Vec<Observation>,
}

/// Result of [`parse_bal`]: the problem plus what load-time pruning removed.
#[derive(Debug, Clone)]
pub struct ParsedBal {
    pub problem: BalProblem,
    pub pruned_cameras: usize,
    pub pruned_points: usize,
}

impl BalProblem {
    /// Builds a problem from parts, checking index bounds and pair uniqueness,
    /// and pruning unreferenced cameras and points.
    #[allow(clippy::new_ret_no_self)]
    pub fn new(
        cameras: Vec<CameraParams>,
        points: Vec<Vector3<f64>>,
        observations: Vec<Observation>,
    ) -> Result<ParsedBal, BalError> {
        let mut seen = HashSet::with_capacity(observations.len());
        for (i, obs) in observations.iter().enumerate() {
            check_indices(obs.camera, obs.point, cameras.len(), points.len(), i + 2)?;
            if !seen.insert((obs.camera, obs.point)) {
                return Err(BalError::DuplicateObservation { line: i + 2, camera: obs.camera, point: obs.point });
            }
        }
        Ok(prune(cameras, points, observations))
    }

    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn cameras(&self) -> &[CameraParams] {
        &self.cameras
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn initial_state(&self) -> State {
        State { cameras: self.cameras.clone(), points: self.points.clone() }
    }

    /// Same observations, new starting parameters.
    pub fn with_state(&self, state: State) -> BalProblem {
        assert_eq!(state.cameras.len(), self.cameras.len());
        assert_eq!(state.points.len(), self.points.len());
        BalProblem { cameras: state.cameras, points: state.points, observations: self.observations.clone() }
    }
}

fn check_indices(camera: usize, point: usize, n_cameras: usize, n_points: usize, line: usize) -> Result<(), BalError> {
    if camera >= n_cameras {
        return Err(BalError::IndexOutOfRange { line, what: "camera", index: camera, count: n_cameras });
    }
    if point >= n_points {
        return Err(BalError::IndexOutOfRange { line, what: "point", index: point, count: n_points });
    }
    Ok(())
}

fn prune(cameras: Vec<CameraParams>, points: Vec<Vector3<f64>>, observations: Vec<Observation>) -> ParsedBal {
    let mut camera_used = vec![false; cameras.len()];
    let mut point_used = vec![false; points.len()];
    for obs in &observations {
        camera_used[obs.camera] = true;
        point_used[obs.point] = true;
    }
    let camera_map = compact_map(&camera_used);
    let point_map = compact_map(&point_used);
    let pruned_cameras = camera_used.iter().filter(|u| !**u).count();
    let pruned_points = point_used.iter().filter(|u| !**u).count();
    if pruned_cameras + pruned_points > 0 {
        log::warn!("pruned {pruned_cameras} unobserved cameras and {pruned_points} unobserved points");
    }

    let cameras = cameras.into_iter().zip(&camera_used).filter(|(_, u)| **u).map(|(c, _)| c).collect();
    let points = points.into_iter().zip(&point_used).filter(|(_, u)| **u).map(|(p, _)| p).collect();
    let observations = observations
        .into_iter()
        .map(|o| Observation { camera: camera_map[o.camera], point: point_map[o.point], pixel: o.pixel })
        .collect();
    ParsedBal { problem: BalProblem { cameras, points, observations }, pruned_cameras, pruned_points }
}

fn compact_map(used: &[bool]) -> Vec<usize> {
    let mut next = 0;
    used.iter()
        .map(|&u| {
            let idx = next;
            if u {
                next += 1;
            }
            idx
        })
        .collect()
}

/// Streams whitespace-separated tokens with their 1-based line numbers.
struct Tokens<R> {
    reader: R,
    line: usize,
    buf: String,
    pending: Vec<String>,
}

impl<R: BufRead> Tokens<R> {
    fn new(reader: R) -> Self {
        Self { reader, line: 0, buf: String::new(), pending: Vec::new() }
    }

    fn next_token(&mut self, expected: &'static str) -> Result<(String, usize), BalError> {
        loop {
            if let Some(tok) = self.pending.pop() {
                return Ok((tok, self.line));
            }
            self.buf.clear();
            if self.reader.read_line(&mut self.buf)? == 0 {
                return Err(BalError::Truncated { line: self.line, expected });
            }
            self.line += 1;
            self.pending = self.buf.split_whitespace().rev().map(str::to_owned).collect();
        }
    }

    fn next_usize(&mut self, expected: &'static str) -> Result<(usize, usize), BalError> {
        let (tok, line) = self.next_token(expected)?;
        tok.parse::<usize>().map(|v| (v, line)).map_err(|_| BalError::BadNumber { line, token: tok, expected })
    }

    fn next_f64(&mut self, expected: &'static str) -> Result<(f64, usize), BalError> {
        let (tok, line) = self.next_token(expected)?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, line)),
            _ => Err(BalError::BadNumber { line, token: tok, expected }),
        }
    }
}

/// Parses a BAL text stream.
pub fn parse_bal<R: BufRead>(reader: R) -> Result<ParsedBal, BalError> {
    let mut tokens = Tokens::new(reader);
    let (n_cameras, _) = tokens.next_usize("camera count")?;
    let (n_points, _) = tokens.next_usize("point count")?;
    let (n_obs, _) = tokens.next_usize("observation count")?;

    let mut observations = Vec::with_capacity(n_obs);
    let mut seen = HashSet::with_capacity(n_obs);
    for _ in 0..n_obs {
        let (camera, line) = tokens.next_usize("observation camera index")?;
        let (point, _) = tokens.next_usize("observation point index")?;
        check_indices(camera, point, n_cameras, n_points, line)?;
        let (px, _) = tokens.next_f64("observation x")?;
        let (py, _) = tokens.next_f64("observation y")?;
        if !seen.insert((camera, point)) {
            return Err(BalError::DuplicateObservation { line, camera, point });
        }
        observations.push(Observation { camera, point, pixel: Vector2::new(px, py) });
    }

    let mut cameras = Vec::with_capacity(n_cameras);
    for camera in 0..n_cameras {
        let mut params = [0.0; POSE_DIM];
        let mut focal_line = 0;
        for (k, slot) in params.iter_mut().enumerate() {
            let (v, line) = tokens.next_f64("camera parameter")?;
            *slot = v;
            if k == 6 {
                focal_line = line;
            }
        }
        if params[6] <= 0.0 {
            return Err(BalError::InvalidFocal { line: focal_line, camera, focal: params[6] });
        }
        cameras.push(CameraParams::from_array(&params).canonicalized());
    }

    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let mut xyz = [0.0; POINT_DIM];
        for slot in &mut xyz {
            *slot = tokens.next_f64("point coordinate")?.0;
        }
        points.push(Vector3::from(xyz));
    }

    Ok(prune(cameras, points, observations))
}

/// Canonical text serialization; [`parse_bal`] reads it back exactly.
pub fn write_bal<W: Write>(problem: &BalProblem, mut out: W) -> io::Result<()> {
    writeln!(out, "{} {} {}", problem.num_cameras(), problem.num_points(), problem.num_observations())?;
    for obs in &problem.observations {
        writeln!(out, "{} {} {:e} {:e}", obs.camera, obs.point, obs.pixel.x, obs.pixel.y)?;
    }
    for camera in &problem.cameras {
        for v in camera.to_array() {
            writeln!(out, "{v:e}")?;
        }
    }
    for point in &problem.points {
        for v in point.iter() {
            writeln!(out, "{v:e}")?;
        }
    }
    out.flush()
}

/// Adds i.i.d. N(0, σ²) noise to every landmark coordinate and every camera
/// translation coordinate. Rotations and intrinsics are left untouched.
pub fn perturb(problem: &BalProblem, sigma: f64, seed: u64) -> Result<BalProblem, BalError> {
    if !(sigma >= 0.0) {
        return Err(BalError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(problem.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed = problem.clone();
    for point in &mut perturbed.points {
        for v in point.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for camera in &mut perturbed.cameras {
        for v in camera.translation.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(perturbed)
}
