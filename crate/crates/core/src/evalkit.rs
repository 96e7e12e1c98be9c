//! Performance profiles, memory accounting and batch benchmark runs.
//!
//! For a problem `p` with initial cost `f0(p)` and best final cost
//! `f*(p)` over the compared solvers, the threshold at tolerance `τ` is
//! `f_τ(p) = f*(p) + τ (f0(p) - f*(p))`. `T_τ(p, s)` is the first trace time
//! at which solver `s` is at or below it, and
//! `ρ(s, α) = 100/|P| · |{p : T_τ(p, s) ≤ α · min_s T_τ(p, s)}|`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bal_io::{perturb, BalError, BalProblem};
use crate::blocks::{BlockScalar, DampedSystem};
use crate::lm::{run, InnerSolver, LmConfig, LmError, Precision};
use crate::power_series::SeriesOptions;
use crate::trace::RunSummary;
use crate::POSE_DIM;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no run records")]
    Empty,
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("alpha grid must be ascending and start at or above 1")]
    InvalidAlphaGrid,
    #[error("problem {problem}: initial costs differ across solvers ({a} vs {b})")]
    InconsistentInitialCost { problem: String, a: f64, b: f64 },
    #[error("problem {problem} has no record for solver {solver}")]
    MissingRun { problem: String, solver: String },
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Bal(#[from] BalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One solver run on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub solver: String,
    pub f0: f64,
    /// `(cumulative time, cost)`, starting with `(0, f0)`.
    pub trace: Vec<(f64, f64)>,
    pub peak_bytes: usize,
}

impl RunRecord {
    pub fn final_cost(&self) -> f64 {
        self.trace.last().map_or(self.f0, |&(_, c)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub solver: String,
    pub tau: f64,
    /// `(α, ρ(s, α))` with ρ in percent.
    pub points: Vec<(f64, f64)>,
}

/// `f_τ(p)` from all records of one problem.
pub fn cost_threshold(records: &[&RunRecord], tau: f64) -> Result<f64, EvalError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(EvalError::InvalidTau(tau));
    }
    let first = records.first().ok_or(EvalError::Empty)?;
    let f0 = first.f0;
    for r in records {
        if (r.f0 - f0).abs() > 1e-12 * f0.abs() {
            return Err(EvalError::InconsistentInitialCost { problem: r.problem.clone(), a: f0, b: r.f0 });
        }
    }
    let f_star = records.iter().map(|r| r.final_cost()).fold(f64::INFINITY, f64::min);
    Ok(f_star + tau * (f0 - f_star))
}

/// First recorded time with cost ≤ threshold; `∞` if never reached.
pub fn time_to_threshold(record: &RunRecord, threshold: f64) -> f64 {
    record.trace.iter().find(|&&(_, c)| c <= threshold).map_or(f64::INFINITY, |&(t, _)| t)
}

/// `n` log-spaced values on `[1, 32]`.
pub fn default_alpha_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| 32f64.powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

struct Grouped<'a> {
    problems: Vec<String>,
    solvers: Vec<String>,
    runs: BTreeMap<(String, String), &'a RunRecord>,
}

fn group(records: &[RunRecord]) -> Result<Grouped<'_>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let problems: BTreeSet<String> = records.iter().map(|r| r.problem.clone()).collect();
    let solvers: BTreeSet<String> = records.iter().map(|r| r.solver.clone()).collect();
    let runs: BTreeMap<_, _> = records.iter().map(|r| ((r.problem.clone(), r.solver.clone()), r)).collect();
    for p in &problems {
        for s in &solvers {
            if !runs.contains_key(&(p.clone(), s.clone())) {
                return Err(EvalError::MissingRun { problem: p.clone(), solver: s.clone() });
            }
        }
    }
    // keep solver order of first appearance for output
    let mut ordered = Vec::new();
    for r in records {
        if !ordered.contains(&r.solver) {
            ordered.push(r.solver.clone());
        }
    }
    Ok(Grouped { problems: problems.into_iter().collect(), solvers: ordered, runs })
}

/// `T_τ(p, s)` for every problem (rows) and solver (columns).
fn threshold_times(g: &Grouped<'_>, tau: f64) -> Result<Vec<Vec<f64>>, EvalError> {
    g.problems
        .iter()
        .map(|p| {
            let recs: Vec<&RunRecord> = g.solvers.iter().map(|s| g.runs[&(p.clone(), s.clone())]).collect();
            let threshold = cost_threshold(&recs, tau)?;
            Ok(recs.iter().map(|r| time_to_threshold(r, threshold)).collect())
        })
        .collect()
}

pub fn performance_profile(
    records: &[RunRecord],
    tau: f64,
    alpha_grid: &[f64],
) -> Result<Vec<ProfileCurve>, EvalError> {
    if alpha_grid.is_empty() || alpha_grid[0] < 1.0 || alpha_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EvalError::InvalidAlphaGrid);
    }
    let g = group(records)?;
    let times = threshold_times(&g, tau)?;
    let n_problems = g.problems.len() as f64;
    Ok(g.solvers
        .iter()
        .enumerate()
        .map(|(s, solver)| {
            let points = alpha_grid
                .iter()
                .map(|&alpha| {
                    let solved = times
                        .iter()
                        .filter(|row| {
                            let best = row.iter().copied().fold(f64::INFINITY, f64::min);
                            row[s].is_finite() && row[s] <= alpha * best
                        })
                        .count();
                    (alpha, 100.0 * solved as f64 / n_problems)
                })
                .collect();
            ProfileCurve { solver: solver.clone(), tau, points }
        })
        .collect())
}

/// Percentage of problems each solver brings below `f_τ(p)` at all.
pub fn solved_percentages(records: &[RunRecord], tau: f64) -> Result<Vec<(String, f64)>, EvalError> {
    let g = group(records)?;
    let times = threshold_times(&g, tau)?;
    let n = g.problems.len() as f64;
    Ok(g.solvers
        .iter()
        .enumerate()
        .map(|(s, name)| (name.clone(), 100.0 * times.iter().filter(|row| row[s].is_finite()).count() as f64 / n))
        .collect())
}

/// One row of the solved-problem table: percentages at `α = 1`, `α = 3`
/// and `α = ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedRow {
    pub solver: String,
    pub tau: f64,
    pub at_1: f64,
    pub at_3: f64,
    pub at_inf: f64,
}

pub fn solved_table(records: &[RunRecord], tau: f64) -> Result<Vec<SolvedRow>, EvalError> {
    let curves = performance_profile(records, tau, &[1.0, 3.0])?;
    let unbounded = solved_percentages(records, tau)?;
    Ok(curves
        .into_iter()
        .zip(unbounded)
        .map(|(c, (_, at_inf))| SolvedRow { solver: c.solver, tau, at_1: c.points[0].1, at_3: c.points[1].1, at_inf })
        .collect())
}

pub fn write_solved_csv<W: Write>(rows: &[SolvedRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "tau,solver,alpha_1,alpha_3,alpha_inf")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.tau, r.solver, r.at_1, r.at_3, r.at_inf)?;
    }
    out.flush()
}

pub fn write_profile_csv<W: Write>(curves: &[ProfileCurve], mut out: W) -> std::io::Result<()> {
    writeln!(out, "alpha,solver,rho_percent")?;
    for curve in curves {
        for &(alpha, rho) in &curve.points {
            writeln!(out, "{alpha},{},{rho}", curve.solver)?;
        }
    }
    out.flush()
}

/// Analytic storage of one damped system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryAccount {
    /// `Σ 2k · 13 · sizeof(scalar)` over landmark blocks.
    pub block_bytes: usize,
    /// Undamped diagonal blocks, gradients, damping diagonals, camera index.
    pub auxiliary_bytes: usize,
    /// Damped U/V blocks, their inverses and `b̃`.
    pub damped_bytes: usize,
}

impl MemoryAccount {
    pub fn total(&self) -> usize {
        self.block_bytes + self.auxiliary_bytes + self.damped_bytes
    }
}

pub fn memory_account<T: BlockScalar>(system: &DampedSystem<'_, T>) -> MemoryAccount {
    let lin = system.linearization();
    MemoryAccount {
        block_bytes: lin.block_bytes(),
        auxiliary_bytes: lin.auxiliary_bytes(),
        damped_bytes: system.damped_bytes(),
    }
}

/// Pose-space work vectors (and preconditioner blocks) held by an inner solver.
pub fn solver_workspace_bytes(inner: &InnerSolver, n_cameras: usize) -> usize {
    let vector = POSE_DIM * n_cameras * std::mem::size_of::<f64>();
    match inner {
        InnerSolver::PowerSeries(_) | InnerSolver::Clustered { .. } => 2 * vector,
        InnerSolver::Pcg { .. } => 5 * vector + POSE_DIM * vector,
        InnerSolver::PcgPowerSeries { .. } => 7 * vector,
        InnerSolver::Direct => vector * vector / std::mem::size_of::<f64>(),
    }
}

/// Named solver configurations used by the benchmark runner and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverId {
    Poba64,
    Poba32,
    Pcg64,
    Pcg32,
    PcgPower,
    Direct,
    Post,
}

impl SolverId {
    pub fn name(self) -> &'static str {
        match self {
            SolverId::Poba64 => "poba64",
            SolverId::Poba32 => "poba32",
            SolverId::Pcg64 => "pcg",
            SolverId::Pcg32 => "pcg32",
            SolverId::PcgPower => "pcg-power",
            SolverId::Direct => "direct",
            SolverId::Post => "post",
        }
    }

    pub fn config(self) -> LmConfig {
        let series = SeriesOptions::default();
        let (inner, precision) = match self {
            SolverId::Poba64 => (InnerSolver::PowerSeries(series), Precision::Double),
            SolverId::Poba32 => (InnerSolver::PowerSeries(series), Precision::Single),
            SolverId::Pcg64 => (InnerSolver::pcg(), Precision::Double),
            SolverId::Pcg32 => (InnerSolver::pcg(), Precision::Single),
            SolverId::PcgPower => {
                (InnerSolver::PcgPowerSeries { order: 2, tol: 1e-6, max_iter: 500 }, Precision::Double)
            }
            SolverId::Direct => (InnerSolver::Direct, Precision::Double),
            SolverId::Post => (InnerSolver::Clustered { series, max_cluster_size: 100 }, Precision::Double),
        };
        LmConfig { inner, precision, ..LmConfig::default() }
    }
}

impl FromStr for SolverId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "poba64" | "poba" => SolverId::Poba64,
            "poba32" => SolverId::Poba32,
            "pcg" | "pcg64" => SolverId::Pcg64,
            "pcg32" => SolverId::Pcg32,
            "pcg-power" => SolverId::PcgPower,
            "direct" => SolverId::Direct,
            "post" => SolverId::Post,
            other => return Err(EvalError::UnknownSolver(other.to_owned())),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<RunSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BenchMode {
    /// One run at a time, so wall-clock traces are comparable.
    #[default]
    Sequential,
    /// All runs concurrently; timings are meaningless, costs are not.
    Parallel,
}

fn bench_one(name: &str, problem: &BalProblem, solver: SolverId) -> Result<(RunRecord, RunSummary), EvalError> {
    log::info!("running {} on {name}", solver.name());
    let result = run(problem, &solver.config())?;
    let trace = &result.trace;
    let record = RunRecord {
        problem: name.to_owned(),
        solver: solver.name().to_owned(),
        f0: trace.initial_cost().unwrap_or(f64::NAN),
        trace: trace.time_cost(),
        peak_bytes: trace.peak_bytes(),
    };
    Ok((record, trace.summary(name, solver.name())))
}

/// Runs every solver on every problem after perturbing each problem once
/// with `(sigma, seed)`. Output order is problem-major in both modes.
pub fn run_benchmark(
    problems: &[(String, BalProblem)],
    solvers: &[SolverId],
    sigma: f64,
    seed: u64,
    mode: BenchMode,
) -> Result<BenchOutput, EvalError> {
    let perturbed = problems
        .iter()
        .map(|(name, p)| Ok((name.as_str(), perturb(p, sigma, seed)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    let jobs: Vec<(&str, &BalProblem, SolverId)> =
        perturbed.iter().flat_map(|(name, p)| solvers.iter().map(move |&s| (*name, p, s))).collect();
    let results = match mode {
        BenchMode::Sequential => jobs.iter().map(|&(n, p, s)| bench_one(n, p, s)).collect::<Result<Vec<_>, _>>()?,
        BenchMode::Parallel => jobs.par_iter().map(|&(n, p, s)| bench_one(n, p, s)).collect::<Result<Vec<_>, _>>()?,
    };
    let (records, summaries) = results.into_iter().unzip();
    Ok(BenchOutput { records, summaries })
}
