//! End-to-end homogenization runs with machine-readable records.
//!
//! A run record captures everything needed to reproduce and audit a run:
//! the input digest, phase properties, solver configuration, per-stage
//! wall times, per-solve diagnostics, and the resulting tensor. Records
//! serialize to JSON with stable key order (struct field order); readers
//! tolerate unknown fields so the schema can grow.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::elastic::{
    assemble_elastic, elastic_full, homogenized_stiffness, solve_cell_elastic, voigt_pairs,
    ElasticResult, IsotropicPhase,
};
use crate::error::{CoreError, Result};
use crate::mals::MalsConfig;
use crate::reference::ReferenceConfig;
use crate::report::{SolveMethod, SolveReport};
use crate::rve::{Provenance, VoxelGrid};
use crate::thermal::{
    assemble_thermal, homogenized_kappa, solve_cell_thermal, thermal_full, ThermalResult,
};
use crate::tt::TruncPolicy;

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding the dense-evaluation size cap used for
/// exact residual checks in the sweep solver.
pub const DENSE_CAP_ENV: &str = "TTCELL_DENSE_CAP";

/// Read the dense-evaluation cap override from the environment.
pub fn dense_cap_from_env() -> Option<usize> {
    std::env::var(DENSE_CAP_ENV).ok()?.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Physics {
    Thermal,
    Elastic,
}

impl std::fmt::Display for Physics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Physics::Thermal => "thermal",
            Physics::Elastic => "elastic",
        })
    }
}

impl std::str::FromStr for Physics {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "thermal" => Ok(Physics::Thermal),
            "elastic" => Ok(Physics::Elastic),
            other => Err(format!("unknown physics '{other}'")),
        }
    }
}

/// Phase properties for either physics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseProps {
    Thermal { kappa_a: f64, kappa_b: f64 },
    Elastic { phase_a: IsotropicPhase, phase_b: IsotropicPhase },
}

/// Input side of a run record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInput {
    /// SHA-256 of the voxel file image.
    pub digest: String,
    pub d: usize,
    pub n_bits: usize,
    pub nodes_per_axis: usize,
    pub dof: usize,
    pub volume_fraction: f64,
    pub provenance: Provenance,
    pub phases: PhaseProps,
}

/// Solver configuration captured in the record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSettings {
    pub method: SolveMethod,
    /// Rounding threshold for train representations (train method).
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_rank: Option<usize>,
    /// Solver convergence tolerance (relative residual).
    pub tol: f64,
    /// Sweep cap for the train solver, iteration cap for the reference.
    pub max_iter: usize,
}

/// Per-stage wall times in seconds. The full-rank path reports its entire
/// run under `solve`; the train path's `assemble` includes the indicator
/// encoding it performs internally (also reported separately as `encode`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageSeconds {
    pub encode: f64,
    pub assemble: f64,
    pub solve: f64,
    pub evaluate: f64,
}

/// Solve-level diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Largest bond rank of the encoded indicator (train method).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chi_rank: Option<usize>,
    /// Frobenius error of the indicator encoding (train method).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chi_encode_error: Option<f64>,
    /// Largest bond rank of the assembled operator (train method).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub operator_rank: Option<usize>,
    /// One report per cell problem (axis or Voigt pair, in order).
    pub solves: Vec<SolveReport>,
}

/// Resulting tensor, plus symmetry diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorOutput {
    Thermal {
        /// Row-major d x d matrix.
        kappa: Vec<Vec<f64>>,
        asymmetry: f64,
    },
    Elastic {
        /// Voigt matrix, pairs ordered (00,11,01) in 2D and
        /// (00,11,22,12,02,01) in 3D.
        voigt: Vec<Vec<f64>>,
        minor_asymmetry: f64,
        major_asymmetry: f64,
    },
}

/// Complete machine-readable record of one homogenization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub physics: Physics,
    pub input: RunInput,
    pub config: RunSettings,
    pub output: TensorOutput,
    pub stages: StageSeconds,
    pub diagnostics: RunDiagnostics,
}

impl RunRecord {
    /// All cell solves converged.
    pub fn converged(&self) -> bool {
        self.diagnostics.solves.iter().all(|s| s.converged)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    /// Parse a record, tolerating unknown fields.
    pub fn from_json(text: &str) -> Result<RunRecord> {
        serde_json::from_str(text)
            .map_err(|e| CoreError::Format(format!("run record parse: {e}")))
    }
}

/// How to run one homogenization.
#[derive(Debug, Clone)]
pub enum MethodSettings {
    /// Train pipeline: assembly threshold plus sweep-solver settings. The
    /// solver policy's rank cap also bounds the indicator encoding.
    Tt { eps: f64, mals: MalsConfig },
    /// Full-rank reference pipeline.
    Full(ReferenceConfig),
}

impl MethodSettings {
    fn as_run_settings(&self) -> RunSettings {
        match self {
            MethodSettings::Tt { eps, mals } => RunSettings {
                method: SolveMethod::Tt,
                eps: *eps,
                max_rank: mals.policy.max_rank,
                tol: mals.tol,
                max_iter: mals.max_sweeps,
            },
            MethodSettings::Full(cfg) => RunSettings {
                method: SolveMethod::Full,
                eps: 0.0,
                max_rank: None,
                tol: cfg.tol,
                max_iter: cfg.max_iter,
            },
        }
    }
}

fn run_input(grid: &VoxelGrid, phases: PhaseProps) -> RunInput {
    let spec = grid.spec();
    RunInput {
        digest: grid.digest(),
        d: spec.dim(),
        n_bits: spec.bits_per_axis(),
        nodes_per_axis: spec.nodes_per_axis(),
        dof: spec.total_nodes(),
        volume_fraction: grid.volume_fraction(),
        provenance: grid.provenance().clone(),
        phases,
    }
}

/// Run a thermal homogenization and build its record.
pub fn run_thermal(
    grid: &VoxelGrid,
    kappa_a: f64,
    kappa_b: f64,
    settings: &MethodSettings,
) -> Result<RunRecord> {
    let input = run_input(grid, PhaseProps::Thermal { kappa_a, kappa_b });
    let (output, stages, diagnostics) = match settings {
        MethodSettings::Tt { eps, mals } => {
            let chi_policy = TruncPolicy { eps: *eps, max_rank: mals.policy.max_rank };
            let t0 = Instant::now();
            let (chi, chi_err) = grid.to_tt(&chi_policy)?;
            let encode = t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            let problem = assemble_thermal(grid, kappa_a, kappa_b, *eps, mals.policy.max_rank)?;
            let assemble = t1.elapsed().as_secs_f64();

            let d = grid.spec().dim();
            let mut correctors = Vec::with_capacity(d);
            let mut solves = Vec::with_capacity(d);
            let t2 = Instant::now();
            for axis in 0..d {
                let (phi, report) = solve_cell_thermal(&problem, axis, mals)?;
                correctors.push(phi);
                solves.push(report);
            }
            let solve = t2.elapsed().as_secs_f64();

            let t3 = Instant::now();
            let kappa_eff = homogenized_kappa(&problem, &correctors)?;
            let evaluate = t3.elapsed().as_secs_f64();

            (
                TensorOutput::Thermal {
                    kappa: (0..d).map(|i| (0..d).map(|j| kappa_eff.get(i, j)).collect()).collect(),
                    asymmetry: kappa_eff.asymmetry(),
                },
                StageSeconds { encode, assemble, solve, evaluate },
                RunDiagnostics {
                    chi_rank: Some(chi.max_rank()),
                    chi_encode_error: Some(chi_err),
                    operator_rank: Some(problem.operator().max_rank()),
                    solves,
                },
            )
        }
        MethodSettings::Full(cfg) => {
            let t = Instant::now();
            let out = thermal_full(grid, kappa_a, kappa_b, cfg)?;
            let solve = t.elapsed().as_secs_f64();
            thermal_output_of(out, solve)
        }
    };
    Ok(RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        physics: Physics::Thermal,
        input,
        config: settings.as_run_settings(),
        output,
        stages,
        diagnostics,
    })
}

fn thermal_output_of(
    out: ThermalResult,
    solve: f64,
) -> (TensorOutput, StageSeconds, RunDiagnostics) {
    let d = out.kappa_eff.dim();
    (
        TensorOutput::Thermal {
            kappa: (0..d).map(|i| (0..d).map(|j| out.kappa_eff.get(i, j)).collect()).collect(),
            asymmetry: out.kappa_eff.asymmetry(),
        },
        StageSeconds { solve, ..StageSeconds::default() },
        RunDiagnostics {
            chi_rank: None,
            chi_encode_error: None,
            operator_rank: out.operator_rank,
            solves: out.reports,
        },
    )
}

/// Run an elastic homogenization and build its record.
pub fn run_elastic(
    grid: &VoxelGrid,
    phase_a: &IsotropicPhase,
    phase_b: &IsotropicPhase,
    settings: &MethodSettings,
) -> Result<RunRecord> {
    let input = run_input(
        grid,
        PhaseProps::Elastic { phase_a: *phase_a, phase_b: *phase_b },
    );
    let (output, stages, diagnostics) = match settings {
        MethodSettings::Tt { eps, mals } => {
            let chi_policy = TruncPolicy { eps: *eps, max_rank: mals.policy.max_rank };
            let t0 = Instant::now();
            let (chi, chi_err) = grid.to_tt(&chi_policy)?;
            let encode = t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            let problem = assemble_elastic(grid, phase_a, phase_b, *eps, mals.policy.max_rank)?;
            let assemble = t1.elapsed().as_secs_f64();

            let pairs = voigt_pairs(grid.spec().dim());
            let mut correctors = Vec::with_capacity(pairs.len());
            let mut solves = Vec::with_capacity(pairs.len());
            let t2 = Instant::now();
            for &(k, l) in &pairs {
                let (xi, report) = solve_cell_elastic(&problem, k, l, mals)?;
                correctors.push(((k, l), xi));
                solves.push(report);
            }
            let solve = t2.elapsed().as_secs_f64();

            let t3 = Instant::now();
            let c_eff = homogenized_stiffness(&problem, &correctors)?;
            let evaluate = t3.elapsed().as_secs_f64();

            let voigt = c_eff.voigt();
            (
                TensorOutput::Elastic {
                    voigt: voigt.rows().into_iter().map(|r| r.to_vec()).collect(),
                    minor_asymmetry: c_eff.minor_asymmetry(),
                    major_asymmetry: c_eff.major_asymmetry(),
                },
                StageSeconds { encode, assemble, solve, evaluate },
                RunDiagnostics {
                    chi_rank: Some(chi.max_rank()),
                    chi_encode_error: Some(chi_err),
                    operator_rank: Some(problem.operator().max_rank()),
                    solves,
                },
            )
        }
        MethodSettings::Full(cfg) => {
            let t = Instant::now();
            let out = elastic_full(grid, phase_a, phase_b, cfg)?;
            let solve = t.elapsed().as_secs_f64();
            elastic_output_of(out, solve)
        }
    };
    Ok(RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        physics: Physics::Elastic,
        input,
        config: settings.as_run_settings(),
        output,
        stages,
        diagnostics,
    })
}

fn elastic_output_of(
    out: ElasticResult,
    solve: f64,
) -> (TensorOutput, StageSeconds, RunDiagnostics) {
    let voigt = out.c_eff.voigt();
    (
        TensorOutput::Elastic {
            voigt: voigt.rows().into_iter().map(|r| r.to_vec()).collect(),
            minor_asymmetry: out.c_eff.minor_asymmetry(),
            major_asymmetry: out.c_eff.major_asymmetry(),
        },
        StageSeconds { solve, ..StageSeconds::default() },
        RunDiagnostics {
            chi_rank: None,
            chi_encode_error: None,
            operator_rank: out.operator_rank,
            solves: out.reports,
        },
    )
}

/// Controls for the lowest-rank search.
#[derive(Debug, Clone)]
pub struct RankSearchConfig {
    /// Rounding threshold used throughout.
    pub eps: f64,
    /// Relative Frobenius error target against the reference tensor.
    pub target_error: f64,
    /// Sweep-solver settings applied at every cap (the cap itself varies).
    pub tol: f64,
    pub max_sweeps: usize,
    /// Give up when the cap exceeds this bound.
    pub rank_limit: usize,
    pub seed: u64,
    pub dense_residual_cap: usize,
}

impl Default for RankSearchConfig {
    fn default() -> Self {
        let base = MalsConfig::default();
        RankSearchConfig {
            eps: 1e-5,
            target_error: 0.01,
            tol: 1e-8,
            max_sweeps: 8,
            rank_limit: 64,
            seed: base.seed,
            dense_residual_cap: base.dense_residual_cap,
        }
    }
}

/// One evaluated cap in a rank search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankPoint {
    /// The cap applied to the indicator and solution trains.
    pub max_rank: usize,
    /// Relative Frobenius error of the homogenized tensor vs. the
    /// reference.
    pub rel_error: f64,
    /// Largest solution rank actually reached.
    pub solution_rank: usize,
    pub converged: bool,
    pub wall_seconds: f64,
}

/// Where the rank-search reference tensor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSource {
    Analytic,
    FullRank,
}

/// Error-vs-rank curve with the first cap meeting the target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankSearch {
    pub schema_version: u32,
    pub tool_version: String,
    pub physics: Physics,
    pub input: RunInput,
    pub eps: f64,
    pub target_error: f64,
    pub reference_source: ReferenceSource,
    /// Reference tensor: d x d matrix (thermal) or Voigt matrix (elastic).
    pub reference: Vec<Vec<f64>>,
    pub points: Vec<RankPoint>,
    /// Smallest cap with `rel_error <= target_error`; `None` when the
    /// search hit `rank_limit` first.
    pub lowest_rank: Option<usize>,
}

impl RankSearch {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rank search serializes")
    }

    pub fn from_json(text: &str) -> Result<RankSearch> {
        serde_json::from_str(text)
            .map_err(|e| CoreError::Format(format!("rank search parse: {e}")))
    }
}

fn frob(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn rel_frob_error(got: &[Vec<f64>], want: &[Vec<f64>]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
        .sum();
    num.sqrt() / frob(want).max(1e-300)
}

fn mals_for(cap: usize, cfg: &RankSearchConfig) -> MalsConfig {
    MalsConfig {
        policy: TruncPolicy::with_eps_and_cap(cfg.eps, cap),
        tol: cfg.tol,
        max_sweeps: cfg.max_sweeps,
        shift: None,
        seed: cfg.seed,
        dense_residual_cap: cfg.dense_residual_cap,
    }
}

/// Search for the lowest rank cap that reproduces the reference thermal
/// tensor within the target error. `reference` supplies an analytic tensor
/// when one is known; otherwise the full-rank solver provides it.
pub fn rank_search_thermal(
    grid: &VoxelGrid,
    kappa_a: f64,
    kappa_b: f64,
    cfg: &RankSearchConfig,
    reference: Option<ndarray::Array2<f64>>,
) -> Result<RankSearch> {
    let (reference_source, want) = match reference {
        Some(m) => (
            ReferenceSource::Analytic,
            (0..m.nrows()).map(|i| m.row(i).to_vec()).collect::<Vec<_>>(),
        ),
        None => {
            let full = thermal_full(grid, kappa_a, kappa_b, &ReferenceConfig::default())?;
            let d = full.kappa_eff.dim();
            (
                ReferenceSource::FullRank,
                (0..d)
                    .map(|i| (0..d).map(|j| full.kappa_eff.get(i, j)).collect())
                    .collect(),
            )
        }
    };
    let mut points = Vec::new();
    let mut lowest_rank = None;
    for cap in 1..=cfg.rank_limit {
        let t = Instant::now();
        let mals = mals_for(cap, cfg);
        let out = crate::thermal::thermal_tt(grid, kappa_a, kappa_b, cfg.eps, &mals)?;
        let d = out.kappa_eff.dim();
        let got: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| out.kappa_eff.get(i, j)).collect())
            .collect();
        let rel_error = rel_frob_error(&got, &want);
        let worst = SolveReport::worst_of(&out.reports);
        points.push(RankPoint {
            max_rank: cap,
            rel_error,
            solution_rank: worst.as_ref().and_then(|w| w.max_rank).unwrap_or(0),
            converged: worst.as_ref().is_some_and(|w| w.converged),
            wall_seconds: t.elapsed().as_secs_f64(),
        });
        if rel_error <= cfg.target_error {
            lowest_rank = Some(cap);
            break;
        }
    }
    Ok(RankSearch {
        schema_version: RECORD_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        physics: Physics::Thermal,
        input: run_input(grid, PhaseProps::Thermal { kappa_a, kappa_b }),
        eps: cfg.eps,
        target_error: cfg.target_error,
        reference_source,
        reference: want,
        points,
        lowest_rank,
    })
}

/// Elastic variant of the lowest-rank search; the comparison runs on the
/// Voigt matrix.
pub fn rank_search_elastic(
    grid: &VoxelGrid,
    phase_a: &IsotropicPhase,
    phase_b: &IsotropicPhase,
    cfg: &RankSearchConfig,
) -> Result<RankSearch> {
    let full = elastic_full(grid, phase_a, phase_b, &ReferenceConfig::default())?;
    let vm = full.c_eff.voigt();
    let want: Vec<Vec<f64>> = vm.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut points = Vec::new();
    let mut lowest_rank = None;
    for cap in 1..=cfg.rank_limit {
        let t = Instant::now();
        let mals = mals_for(cap, cfg);
        let out = crate::elastic::elastic_tt(grid, phase_a, phase_b, cfg.eps, &mals)?;
        let gm = out.c_eff.voigt();
        let got: Vec<Vec<f64>> = gm.rows().into_iter().map(|r| r.to_vec()).collect();
        let rel_error = rel_frob_error(&got, &want);
        let worst = SolveReport::worst_of(&out.reports);
        points.push(RankPoint {
            max_rank: cap,
            rel_error,
            solution_rank: worst.as_ref().and_then(|w| w.max_rank).unwrap_or(0),
            converged: worst.as_ref().is_some_and(|w| w.converged),
            wall_seconds: t.elapsed().as_secs_f64(),
        });
        if rel_error <= cfg.target_error {
            lowest_rank = Some(cap);
            break;
        }
    }
    Ok(RankSearch {
        schema_version: RECORD_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        physics: Physics::Elastic,
        input: run_input(
            grid,
            PhaseProps::Elastic { phase_a: *phase_a, phase_b: *phase_b },
        ),
        eps: cfg.eps,
        target_error: cfg.target_error,
        reference_source: ReferenceSource::FullRank,
        reference: want,
        points,
        lowest_rank,
    })
}

/// One row of a benchmark sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub physics: Physics,
    pub d: usize,
    pub n_bits: usize,
    pub dof: usize,
    pub method: SolveMethod,
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    /// Largest solution rank (0 for the full-rank method).
    pub max_rank: usize,
    pub converged: bool,
}

const BENCH_HEADER: &str =
    "physics,d,n,dof,method,assemble_seconds,solve_seconds,total_seconds,max_rank,converged";

/// Render benchmark rows as CSV. Lines starting with `#` carry machine
/// metadata; parsers skip them.
pub fn benchmark_csv(rows: &[BenchRow]) -> String {
    let cpus = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    let mut out = String::new();
    out.push_str(&format!("# tool_version={TOOL_VERSION}\n"));
    out.push_str(&format!(
        "# os={} arch={} cpus={cpus}\n",
        std::env::consts::OS,
        std::env::consts::ARCH
    ));
    out.push_str(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.physics,
            r.d,
            r.n_bits,
            r.dof,
            r.method,
            r.assemble_seconds,
            r.solve_seconds,
            r.total_seconds,
            r.max_rank,
            r.converged
        ));
    }
    out
}

/// Parse a benchmark CSV produced by [`benchmark_csv`].
pub fn parse_benchmark_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != BENCH_HEADER {
                return Err(CoreError::Format(format!(
                    "benchmark CSV header mismatch at line {}",
                    ln + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(CoreError::Format(format!(
                "benchmark CSV row at line {} has {} fields, expected 10",
                ln + 1,
                f.len()
            )));
        }
        let parse_err =
            |what: &str| CoreError::Format(format!("benchmark CSV line {}: bad {what}", ln + 1));
        rows.push(BenchRow {
            physics: f[0].parse().map_err(|_| parse_err("physics"))?,
            d: f[1].parse().map_err(|_| parse_err("d"))?,
            n_bits: f[2].parse().map_err(|_| parse_err("n"))?,
            dof: f[3].parse().map_err(|_| parse_err("dof"))?,
            method: f[4].parse().map_err(|_| parse_err("method"))?,
            assemble_seconds: f[5].parse().map_err(|_| parse_err("assemble_seconds"))?,
            solve_seconds: f[6].parse().map_err(|_| parse_err("solve_seconds"))?,
            total_seconds: f[7].parse().map_err(|_| parse_err("total_seconds"))?,
            max_rank: f[8].parse().map_err(|_| parse_err("max_rank"))?,
            converged: f[9].parse().map_err(|_| parse_err("converged"))?,
        });
    }
    if !saw_header {
        return Err(CoreError::Format("benchmark CSV missing header".into()));
    }
    Ok(rows)
}

/// Time one method on one grid and produce a benchmark row.
pub fn benchmark_one(
    physics: Physics,
    grid: &VoxelGrid,
    phases: &PhaseProps,
    settings: &MethodSettings,
) -> Result<BenchRow> {
    let record = match (physics, phases) {
        (Physics::Thermal, PhaseProps::Thermal { kappa_a, kappa_b }) => {
            run_thermal(grid, *kappa_a, *kappa_b, settings)?
        }
        (Physics::Elastic, PhaseProps::Elastic { phase_a, phase_b }) => {
            run_elastic(grid, phase_a, phase_b, settings)?
        }
        _ => {
            return Err(CoreError::InvalidParameter(
                "phase properties do not match the requested physics".into(),
            ))
        }
    };
    let s = &record.stages;
    let max_rank = record
        .diagnostics
        .solves
        .iter()
        .filter_map(|r| r.max_rank)
        .max()
        .unwrap_or(0);
    Ok(BenchRow {
        physics,
        d: record.input.d,
        n_bits: record.input.n_bits,
        dof: record.input.dof,
        method: record.config.method,
        assemble_seconds: s.encode + s.assemble,
        solve_seconds: s.solve,
        total_seconds: s.encode + s.assemble + s.solve + s.evaluate,
        max_rank,
        converged: record.converged(),
    })
}

/// Write a file atomically: write to a temp sibling, then rename over the
/// target.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp_name = format!(".{stem}.tmp.{}", std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
