//! Solver traces and their CSV / JSON persistence.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// One LM iteration. Iteration 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cumulative_time_s: f64,
    /// Cost of the current state after this iteration (unchanged on rejection).
    pub cost: f64,
    pub lambda: f64,
    pub accepted: bool,
    /// CG iterations, or series orders for power-series solvers.
    pub inner_iterations: usize,
    /// Series order used (0 for solvers without one).
    pub order_m: usize,
    /// The series hit its maximum order without meeting the stop criterion.
    pub series_capped: bool,
    pub invalid_observations: usize,
    pub peak_bytes: usize,
}

/// The persisted subset of an [`IterationRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub cumulative_time_s: f64,
    pub cost: f64,
    pub inner_iterations: usize,
    pub order_m: usize,
    pub peak_bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub solver: String,
    pub final_cost: f64,
    pub total_time_s: f64,
    pub peak_bytes: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace has no records")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SolverTrace {
    pub fn initial_cost(&self) -> Option<f64> {
        self.records.first().map(|r| r.cost)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.records.last().map(|r| r.cost)
    }

    pub fn total_time_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_time_s)
    }

    pub fn peak_bytes(&self) -> usize {
        self.records.iter().map(|r| r.peak_bytes).max().unwrap_or(0)
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        self.records
            .iter()
            .map(|r| TraceRow {
                iter: r.iter,
                cumulative_time_s: r.cumulative_time_s,
                cost: r.cost,
                inner_iterations: r.inner_iterations,
                order_m: r.order_m,
                peak_bytes: r.peak_bytes,
            })
            .collect()
    }

    /// `(time, cost)` pairs in iteration order.
    pub fn time_cost(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.cumulative_time_s, r.cost)).collect()
    }

    pub fn summary(&self, problem: &str, solver: &str) -> RunSummary {
        RunSummary {
            problem: problem.to_owned(),
            solver: solver.to_owned(),
            final_cost: self.final_cost().unwrap_or(f64::NAN),
            total_time_s: self.total_time_s(),
            peak_bytes: self.peak_bytes(),
        }
    }
}

/// Writes `iter,cumulative_time_s,cost,inner_iterations,order_m,peak_bytes`.
pub fn write_trace<W: Write>(trace: &SolverTrace, sink: W) -> Result<(), TraceError> {
    if trace.records.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut writer = csv::Writer::from_writer(sink);
    for row in trace.rows() {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(source: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut reader = csv::Reader::from_reader(source);
    let rows = reader.deserialize().collect::<Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

pub fn write_summary<W: Write>(summary: &RunSummary, sink: W) -> Result<(), TraceError> {
    serde_json::to_writer_pretty(sink, summary)?;
    Ok(())
}
