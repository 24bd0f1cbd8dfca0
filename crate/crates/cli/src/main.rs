//! Command-line driver for tensor-train homogenization runs.
//!
//! Exit codes: 0 success, 2 solver nonconvergence, 3 input or format
//! errors (including bad command lines).

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ttcell_core::elastic::IsotropicPhase;
use ttcell_core::error::CoreError;
use ttcell_core::fdm::LatticeSpec;
use ttcell_core::mals::MalsConfig;
use ttcell_core::pipeline::{
    benchmark_csv, benchmark_one, dense_cap_from_env, rank_search_elastic, rank_search_thermal,
    run_elastic, run_thermal, write_atomic, MethodSettings, PhaseProps, Physics, RankSearchConfig,
    RunRecord, TensorOutput,
};
use ttcell_core::reference::ReferenceConfig;
use ttcell_core::report::SolveMethod;
use ttcell_core::rve::{
    generate_voronoi, layered_rve_45, read_voxel_file, write_voxel_file, VoronoiConfig, VoxelGrid,
};
use ttcell_core::thermal::analytic_layered45_kappa;
use ttcell_core::tt::TruncPolicy;

#[derive(Parser)]
#[command(
    name = "ttcell",
    version,
    about = "Effective thermal and elastic tensors of periodic two-phase media,\n\
             via quantized tensor-train cell solves or a full-rank reference."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or inspect voxel microstructures.
    Rve {
        #[command(subcommand)]
        cmd: RveCmd,
    },
    /// Run a homogenization and emit a JSON run record.
    Homogenize {
        #[command(subcommand)]
        cmd: HomogCmd,
    },
    /// Find the lowest rank cap meeting a target tensor error.
    RankSearch(RankSearchArgs),
    /// Sweep problem sizes and emit a CSV of wall times per method.
    Benchmark(BenchmarkArgs),
}

#[derive(Subcommand)]
enum RveCmd {
    /// Write a periodic Voronoi structure (or the diagonal laminate).
    Generate(GenerateArgs),
    /// Print geometry, volume fraction, and digest of a voxel file.
    Inspect { file: PathBuf },
}

#[derive(Args)]
struct GenerateArgs {
    /// Spatial dimension (2 or 3).
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Bits per axis; the lattice has 2^bits nodes per axis.
    #[arg(long, default_value_t = 6)]
    bits: usize,
    /// Number of Voronoi seed points.
    #[arg(long, default_value_t = 100)]
    npoint: usize,
    /// Target phase A volume fraction.
    #[arg(long, default_value_t = 0.5)]
    vf: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Diagonal laminate with exact fraction 1/2 instead of Voronoi.
    #[arg(long, default_value_t = false)]
    layered45: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value = "tt", value_parser = SolveMethod::from_str)]
    method: SolveMethod,
    /// Rounding threshold for train representations.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Rank cap for the indicator and solution trains (unbounded when
    /// absent).
    #[arg(long)]
    max_rank: Option<usize>,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Sweep cap (train) or iteration cap scale (full uses its own cap).
    #[arg(long, default_value_t = 40)]
    max_sweeps: usize,
    /// Write the JSON run record here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SolverArgs {
    fn settings(&self) -> MethodSettings {
        match self.method {
            SolveMethod::Tt => {
                let defaults = MalsConfig::default();
                MethodSettings::Tt {
                    eps: self.eps,
                    mals: MalsConfig {
                        policy: TruncPolicy { eps: self.eps, max_rank: self.max_rank },
                        tol: self.tol,
                        max_sweeps: self.max_sweeps,
                        dense_residual_cap: dense_cap_from_env()
                            .unwrap_or(defaults.dense_residual_cap),
                        ..defaults
                    },
                }
            }
            SolveMethod::Full => {
                MethodSettings::Full(ReferenceConfig { tol: self.tol, ..ReferenceConfig::default() })
            }
        }
    }
}

#[derive(Args)]
struct ThermalArgs {
    /// Voxel microstructure file.
    #[arg(long)]
    rve: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    kappa_a: f64,
    #[arg(long, default_value_t = 0.5)]
    kappa_b: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ElasticArgs {
    /// Voxel microstructure file.
    #[arg(long)]
    rve: PathBuf,
    /// Young's modulus of phase A.
    #[arg(long, default_value_t = 1.0)]
    young_a: f64,
    /// Young's modulus of phase B.
    #[arg(long, default_value_t = 0.5)]
    young_b: f64,
    /// Poisson ratio shared by both phases.
    #[arg(long, default_value_t = 0.3)]
    poisson: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Subcommand)]
enum HomogCmd {
    Thermal(ThermalArgs),
    Elastic(ElasticArgs),
}

#[derive(Args)]
struct RankSearchArgs {
    #[arg(long, default_value = "thermal", value_parser = Physics::from_str)]
    physics: Physics,
    #[arg(long)]
    rve: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    kappa_a: f64,
    #[arg(long, default_value_t = 0.5)]
    kappa_b: f64,
    #[arg(long, default_value_t = 1.0)]
    young_a: f64,
    #[arg(long, default_value_t = 0.5)]
    young_b: f64,
    #[arg(long, default_value_t = 0.3)]
    poisson: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Relative tensor error target.
    #[arg(long, default_value_t = 0.01)]
    target_error: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 8)]
    max_sweeps: usize,
    /// Stop the search beyond this cap.
    #[arg(long, default_value_t = 64)]
    rank_limit: usize,
    /// Write the JSON search record here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value = "thermal", value_parser = Physics::from_str)]
    physics: Physics,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Comma-separated bits-per-axis values to sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,6,7")]
    bits: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    npoint: usize,
    #[arg(long, default_value_t = 0.5)]
    vf: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    kappa_a: f64,
    #[arg(long, default_value_t = 0.5)]
    kappa_b: f64,
    #[arg(long, default_value_t = 1.0)]
    young_a: f64,
    #[arg(long, default_value_t = 0.5)]
    young_b: f64,
    #[arg(long, default_value_t = 0.3)]
    poisson: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Rank cap for the train method.
    #[arg(long)]
    max_rank: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_sweeps: usize,
    /// Write the CSV table here.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(3) };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Map failures onto the documented exit codes.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CoreError>() {
        Some(CoreError::NotConverged(_)) | Some(CoreError::NonFinite { .. }) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Rve { cmd } => match cmd {
            RveCmd::Generate(args) => cmd_generate(&args),
            RveCmd::Inspect { file } => cmd_inspect(&file),
        },
        Cmd::Homogenize { cmd } => match cmd {
            HomogCmd::Thermal(args) => cmd_thermal(&args),
            HomogCmd::Elastic(args) => cmd_elastic(&args),
        },
        Cmd::RankSearch(args) => cmd_rank_search(&args),
        Cmd::Benchmark(args) => cmd_benchmark(&args),
    }
}

fn load_grid(path: &PathBuf) -> anyhow::Result<VoxelGrid> {
    read_voxel_file(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<ExitCode> {
    let spec = LatticeSpec::new(args.dim, args.bits)?;
    let grid = if args.layered45 {
        layered_rve_45(&spec)?
    } else {
        let cfg = VoronoiConfig { n_point: args.npoint, v_f: args.vf, seed: args.seed };
        generate_voronoi(&spec, &cfg)?
    };
    write_voxel_file(&args.out, &grid)?;
    println!(
        "wrote {} (d = {}, N = {}, volume fraction = {:.6})",
        args.out.display(),
        spec.dim(),
        spec.nodes_per_axis(),
        grid.volume_fraction()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(file: &PathBuf) -> anyhow::Result<ExitCode> {
    let grid = load_grid(file)?;
    let spec = grid.spec();
    let p = grid.provenance();
    println!("d = {}", spec.dim());
    println!(
        "N = {} per axis ({} bits, {} nodes)",
        spec.nodes_per_axis(),
        spec.bits_per_axis(),
        spec.total_nodes()
    );
    println!("volume fraction = {:.6}", grid.volume_fraction());
    println!("generator = {}", if p.generator.is_empty() { "unknown" } else { &p.generator });
    if let Some(seed) = p.seed {
        println!("seed = {seed}");
    }
    if let Some(np) = p.n_point {
        println!("points = {np}");
    }
    if let Some(vf) = p.v_f {
        println!("target fraction = {vf}");
    }
    println!("sha256 = {}", grid.digest());
    Ok(ExitCode::SUCCESS)
}

fn print_matrix(label: &str, rows: &[Vec<f64>]) {
    println!("{label}:");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.8}")).collect();
        println!("  [{}]", cells.join(", "));
    }
}

/// Write the record if requested, print the tensor, and map convergence to
/// the exit code.
fn finish_run(record: &RunRecord, out: &Option<PathBuf>) -> anyhow::Result<ExitCode> {
    if let Some(path) = out {
        write_atomic(path, record.to_json().as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("record written to {}", path.display());
    }
    match &record.output {
        TensorOutput::Thermal { kappa, asymmetry } => {
            print_matrix("effective conductivity", kappa);
            println!("asymmetry = {asymmetry:.3e}");
        }
        TensorOutput::Elastic { voigt, minor_asymmetry, major_asymmetry } => {
            print_matrix("effective stiffness (Voigt)", voigt);
            println!("minor asymmetry = {minor_asymmetry:.3e}");
            println!("major asymmetry = {major_asymmetry:.3e}");
        }
    }
    if record.converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: solver did not reach tolerance; see record diagnostics");
        Ok(ExitCode::from(2))
    }
}

fn cmd_thermal(args: &ThermalArgs) -> anyhow::Result<ExitCode> {
    let grid = load_grid(&args.rve)?;
    let record = run_thermal(&grid, args.kappa_a, args.kappa_b, &args.solver.settings())?;
    finish_run(&record, &args.solver.out)
}

fn cmd_elastic(args: &ElasticArgs) -> anyhow::Result<ExitCode> {
    let grid = load_grid(&args.rve)?;
    let pa = IsotropicPhase::from_engineering(args.young_a, args.poisson);
    let pb = IsotropicPhase::from_engineering(args.young_b, args.poisson);
    let record = run_elastic(&grid, &pa, &pb, &args.solver.settings())?;
    finish_run(&record, &args.solver.out)
}

fn cmd_rank_search(args: &RankSearchArgs) -> anyhow::Result<ExitCode> {
    let grid = load_grid(&args.rve)?;
    let defaults = RankSearchConfig::default();
    let cfg = RankSearchConfig {
        eps: args.eps,
        target_error: args.target_error,
        tol: args.tol,
        max_sweeps: args.max_sweeps,
        rank_limit: args.rank_limit,
        dense_residual_cap: dense_cap_from_env().unwrap_or(defaults.dense_residual_cap),
        ..defaults
    };
    let search = match args.physics {
        Physics::Thermal => {
            // The diagonal laminate has a closed-form tensor; anything else
            // is referenced against the full-rank solver.
            let analytic = (grid.provenance().generator == "layered45")
                .then(|| analytic_layered45_kappa(args.kappa_a, args.kappa_b));
            rank_search_thermal(&grid, args.kappa_a, args.kappa_b, &cfg, analytic)?
        }
        Physics::Elastic => {
            let pa = IsotropicPhase::from_engineering(args.young_a, args.poisson);
            let pb = IsotropicPhase::from_engineering(args.young_b, args.poisson);
            rank_search_elastic(&grid, &pa, &pb, &cfg)?
        }
    };
    if let Some(path) = &args.out {
        write_atomic(path, search.to_json().as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("search record written to {}", path.display());
    }
    for p in &search.points {
        println!(
            "rank {:>3}: error {:.6e} (solution rank {}, {:.2}s)",
            p.max_rank, p.rel_error, p.solution_rank, p.wall_seconds
        );
    }
    match search.lowest_rank {
        Some(r) => {
            println!("lowest rank meeting target {}: {r}", search.target_error);
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!(
                "no cap up to {} met the target error {}",
                cfg.rank_limit, search.target_error
            );
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_benchmark(args: &BenchmarkArgs) -> anyhow::Result<ExitCode> {
    if args.bits.is_empty() {
        bail!(CoreError::InvalidParameter("empty bits sweep".into()));
    }
    let phases = match args.physics {
        Physics::Thermal => {
            PhaseProps::Thermal { kappa_a: args.kappa_a, kappa_b: args.kappa_b }
        }
        Physics::Elastic => PhaseProps::Elastic {
            phase_a: IsotropicPhase::from_engineering(args.young_a, args.poisson),
            phase_b: IsotropicPhase::from_engineering(args.young_b, args.poisson),
        },
    };
    let defaults = MalsConfig::default();
    let tt_settings = MethodSettings::Tt {
        eps: args.eps,
        mals: MalsConfig {
            policy: TruncPolicy { eps: args.eps, max_rank: args.max_rank },
            tol: args.tol,
            max_sweeps: args.max_sweeps,
            dense_residual_cap: dense_cap_from_env().unwrap_or(defaults.dense_residual_cap),
            ..defaults
        },
    };
    let full_settings = MethodSettings::Full(ReferenceConfig::default());
    let mut rows = Vec::new();
    for &bits in &args.bits {
        let spec = LatticeSpec::new(args.dim, bits)?;
        let cfg = VoronoiConfig { n_point: args.npoint, v_f: args.vf, seed: args.seed };
        let grid = generate_voronoi(&spec, &cfg)?;
        for settings in [&tt_settings, &full_settings] {
            let row = benchmark_one(args.physics, &grid, &phases, settings)?;
            println!(
                "{} n={} dof={} {}: total {:.3}s (solve {:.3}s)",
                row.physics, row.n_bits, row.dof, row.method, row.total_seconds,
                row.solve_seconds
            );
            rows.push(row);
        }
    }
    write_atomic(&args.out, benchmark_csv(&rows).as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("benchmark table written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
