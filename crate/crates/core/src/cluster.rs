//! Camera clustering with independent per-cluster power-series solves.
//!
//! Cameras are grouped by greedy agglomeration on the covisibility graph
//! (edge weight = number of landmarks two cameras share). Each cluster's
//! sub-system keeps only its own cameras' observation rows; coupling across
//! clusters is dropped, and the landmark update is recovered afterwards by
//! global back-substitution.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bal_io::BalProblem;
use crate::blocks::{BlockScalar, DampedSystem};
use crate::power_series::{power_series_solve, SeriesOptions};
use crate::reduced::SolverError;
use crate::POSE_DIM;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CameraClustering {
    /// Cluster id of each camera.
    pub assignment: Vec<usize>,
    /// Sorted cameras of each cluster; cluster ids ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// Landmarks observed from more than one cluster.
    pub cut_landmarks: usize,
    /// Observations of those landmarks.
    pub cut_observations: usize,
    /// Total covisibility weight of edges between clusters.
    pub cut_weight: usize,
}

impl CameraClustering {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    /// Builds a clustering from an explicit assignment (ids need not be dense).
    pub fn from_assignment(problem: &BalProblem, assignment: &[usize]) -> Self {
        assert_eq!(assignment.len(), problem.num_cameras());
        let mut by_label: HashMap<usize, Vec<usize>> = HashMap::new();
        for (cam, &label) in assignment.iter().enumerate() {
            by_label.entry(label).or_default().push(cam);
        }
        let mut clusters: Vec<Vec<usize>> = by_label.into_values().collect();
        clusters.sort_by_key(|c| c[0]);
        let mut dense = vec![0; assignment.len()];
        for (id, members) in clusters.iter().enumerate() {
            for &cam in members {
                dense[cam] = id;
            }
        }
        let (cut_landmarks, cut_observations) = cut_statistics(problem, &dense);
        let cut_weight =
            covisibility(problem).into_iter().filter(|((a, b), _)| dense[*a] != dense[*b]).map(|(_, w)| w).sum();
        Self { assignment: dense, clusters, cut_landmarks, cut_observations, cut_weight }
    }
}

fn cameras_per_point(problem: &BalProblem) -> Vec<Vec<usize>> {
    let mut per_point = vec![Vec::new(); problem.num_points()];
    for obs in problem.observations() {
        per_point[obs.point].push(obs.camera);
    }
    for cams in &mut per_point {
        cams.sort_unstable();
    }
    per_point
}

/// Covisibility edge weights keyed by `(smaller, larger)` camera index.
fn covisibility(problem: &BalProblem) -> HashMap<(usize, usize), usize> {
    let mut weights = HashMap::new();
    for cams in cameras_per_point(problem) {
        for (i, &a) in cams.iter().enumerate() {
            for &b in &cams[i + 1..] {
                *weights.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    weights
}

fn cut_statistics(problem: &BalProblem, assignment: &[usize]) -> (usize, usize) {
    let mut landmarks = 0;
    let mut observations = 0;
    for cams in cameras_per_point(problem) {
        if cams.iter().any(|&c| assignment[c] != assignment[cams[0]]) {
            landmarks += 1;
            observations += cams.len();
        }
    }
    (landmarks, observations)
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        let (keep, merge) = if a < b { (a, b) } else { (b, a) };
        self.parent[merge] = keep;
        self.size[keep] += self.size[merge];
    }
}

/// Greedy agglomerative clustering: edges are merged heaviest first (ties by
/// smallest camera pair) whenever the merged cluster fits `max_cluster_size`.
pub fn cluster_cameras(problem: &BalProblem, max_cluster_size: usize) -> Result<CameraClustering, SolverError> {
    if max_cluster_size == 0 {
        return Err(SolverError::InvalidParameter("max_cluster_size must be at least 1".into()));
    }
    let mut edges: Vec<((usize, usize), usize)> = covisibility(problem).into_iter().collect();
    edges.sort_unstable_by(|(ea, wa), (eb, wb)| wb.cmp(wa).then(ea.cmp(eb)));

    let mut sets = DisjointSets::new(problem.num_cameras());
    for ((a, b), _) in edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && sets.size[ra] + sets.size[rb] <= max_cluster_size {
            sets.union(ra, rb);
        }
    }
    let roots: Vec<usize> = (0..problem.num_cameras()).map(|c| sets.find(c)).collect();
    Ok(CameraClustering::from_assignment(problem, &roots))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSolution {
    pub delta_p: DVector<f64>,
    /// Series order used by each cluster.
    pub orders: Vec<usize>,
    /// Some cluster hit the order cap.
    pub capped: bool,
}

/// Solves every cluster's restricted reduced system by the power series and
/// concatenates the pose updates.
pub fn solve_clustered<T: BlockScalar>(
    system: &DampedSystem<'_, T>,
    clustering: &CameraClustering,
    options: SeriesOptions,
) -> Result<ClusteredSolution, SolverError> {
    if clustering.assignment.len() != system.num_cameras() {
        return Err(SolverError::DimensionMismatch {
            expected: system.num_cameras(),
            got: clustering.assignment.len(),
        });
    }
    let lin = system.linearization();
    let solutions = clustering
        .clusters
        .par_iter()
        .map(|cameras| {
            let sub = lin.restrict(cameras)?;
            let sub_system = sub.damped(system.lambda(), system.damping_mode())?;
            power_series_solve(&sub_system, options)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut delta_p = DVector::zeros(POSE_DIM * system.num_cameras());
    for (cameras, solution) in clustering.clusters.iter().zip(&solutions) {
        for (local, &cam) in cameras.iter().enumerate() {
            delta_p.rows_mut(POSE_DIM * cam, POSE_DIM).copy_from(&solution.delta_p.rows(POSE_DIM * local, POSE_DIM));
        }
    }
    Ok(ClusteredSolution {
        delta_p,
        orders: solutions.iter().map(|s| s.order_used).collect(),
        capped: solutions.iter().any(|s| s.capped),
    })
}
