//! Solve metadata shared by the train and full-rank paths.

use serde::{Deserialize, Serialize};

/// Which discretization backend produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Quantized-train sweep solver.
    Tt,
    /// Full-rank conjugate gradient reference.
    Full,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMethod::Tt => "tt",
            SolveMethod::Full => "full",
        })
    }
}

impl std::str::FromStr for SolveMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tt" => Ok(SolveMethod::Tt),
            "full" => Ok(SolveMethod::Full),
            other => Err(format!("unknown method '{other}', expected tt or full")),
        }
    }
}

/// Outcome of one cell-problem solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub converged: bool,
    /// Sweeps for the train solver, conjugate-gradient iterations for the
    /// reference.
    pub iterations: usize,
    /// Final relative residual `||A x - b|| / ||b||`.
    pub residual: f64,
    /// True when the residual came from a rounded estimate rather than an
    /// exact evaluation.
    pub residual_estimated: bool,
    /// Largest bond rank of the solution train; `None` for the reference.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_rank: Option<usize>,
    pub wall_seconds: f64,
}

impl SolveReport {
    /// Merge per-right-hand-side reports into a worst-case summary: least
    /// converged, largest residual, most iterations.
    pub fn worst_of(reports: &[SolveReport]) -> Option<SolveReport> {
        let first = reports.first()?;
        let mut out = first.clone();
        for r in &reports[1..] {
            out.converged &= r.converged;
            out.iterations = out.iterations.max(r.iterations);
            if r.residual > out.residual {
                out.residual = r.residual;
                out.residual_estimated = r.residual_estimated;
            }
            out.max_rank = match (out.max_rank, r.max_rank) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
            out.wall_seconds += r.wall_seconds;
        }
        Some(out)
    }
}
