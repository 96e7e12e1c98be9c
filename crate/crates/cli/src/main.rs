use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use poba::evalkit::{
    default_alpha_grid, performance_profile, run_benchmark, solved_table, write_profile_csv, write_solved_csv,
    BenchMode, SolverId,
};
use poba::lm::run;
use poba::spectral::verify_error_bound;
use poba::trace::{write_summary, write_trace};
use poba::{
    parse_bal, perturb, write_bal, BalProblem, DampingMode, InnerSolver, Linearization, LmConfig, Precision,
    SeriesOptions,
};

#[derive(Parser)]
#[command(name = "poba", version, about = "Bundle adjustment with a power-series Schur complement solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Perturb a BAL problem and optimize it with Levenberg-Marquardt.
    Solve(SolveArgs),
    /// Compare the series error with its spectral bound on the first LM system.
    Diagnose(DiagnoseArgs),
    /// Run several solvers on every BAL file of a directory and write profiles.
    Bench(BenchArgs),
    /// Write a synthetic BAL problem.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Poba,
    Pcg,
    PcgPower,
    Direct,
    Post,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    #[value(name = "32")]
    Single,
    #[value(name = "64")]
    Double,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "poba")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "64")]
    precision: PrecisionArg,
    /// Series stop threshold.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Series order cap.
    #[arg(long, default_value_t = 20)]
    max_order: usize,
    /// Standard deviation of the noise added to landmarks and translations.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    initial_lambda: f64,
    /// CG relative residual tolerance for the pcg solvers.
    #[arg(long, default_value_t = 1e-6)]
    cg_tol: f64,
    #[arg(long, default_value_t = 500)]
    cg_max_iter: usize,
    /// Series order of the pcg-power preconditioner.
    #[arg(long, default_value_t = 2)]
    preconditioner_order: usize,
    #[arg(long, default_value_t = 100)]
    max_cluster_size: usize,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Write the optimized problem in BAL format.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_order: usize,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV with columns `m,bound,measured_error`.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Directory of BAL files; every regular file is loaded.
    #[arg(long)]
    problems: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "poba64,poba32,pcg")]
    solvers: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.003,0.001")]
    tau: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of log-spaced α samples on [1, 32].
    #[arg(long, default_value_t = 50)]
    alpha_points: usize,
    /// Run all jobs concurrently; timings are then not comparable.
    #[arg(long)]
    parallel: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scene {
    /// 49 cameras along a street, about 7.8k landmarks.
    Ladybug,
    /// Cameras on a circle around a ball of points.
    Ring,
    /// Small random ring scene sized from the seed.
    Random,
    /// Three cameras and five landmarks.
    Fixture,
    /// Two rings without shared landmarks.
    TwoComponent,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "ladybug")]
    scene: Scene,
    #[arg(long, default_value_t = 10)]
    cameras: usize,
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Pixel noise of the observations (ring scenes).
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn load(path: &Path) -> Result<BalProblem> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed = parse_bal(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
    if parsed.pruned_cameras + parsed.pruned_points > 0 {
        eprintln!("pruned {} cameras and {} points without observations", parsed.pruned_cameras, parsed.pruned_points);
    }
    Ok(parsed.problem)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn solve(args: SolveArgs) -> Result<()> {
    let problem = perturb(&load(&args.input)?, args.sigma, args.seed)?;
    let series = SeriesOptions { epsilon: args.epsilon, max_order: args.max_order };
    let inner = match args.solver {
        SolverArg::Poba => InnerSolver::PowerSeries(series),
        SolverArg::Pcg => InnerSolver::Pcg { tol: args.cg_tol, max_iter: args.cg_max_iter },
        SolverArg::PcgPower => InnerSolver::PcgPowerSeries {
            order: args.preconditioner_order,
            tol: args.cg_tol,
            max_iter: args.cg_max_iter,
        },
        SolverArg::Direct => InnerSolver::Direct,
        SolverArg::Post => {
            if args.max_cluster_size == 0 {
                bail!("--max-cluster-size must be at least 1");
            }
            InnerSolver::Clustered { series, max_cluster_size: args.max_cluster_size }
        }
    };
    let precision = match args.precision {
        PrecisionArg::Single => Precision::Single,
        PrecisionArg::Double => Precision::Double,
    };
    let config = LmConfig {
        initial_lambda: args.initial_lambda,
        max_outer_iterations: args.max_iterations,
        inner,
        precision,
        ..LmConfig::default()
    };
    let result = run(&problem, &config)?;
    let trace = &result.trace;
    let solver_name = solver_label(args.solver, args.precision);
    println!(
        "{}: cost {:.6e} -> {:.6e} in {} iterations ({:?}), {:.3}s, peak {} bytes",
        solver_name,
        trace.initial_cost().unwrap_or(f64::NAN),
        result.final_cost(),
        trace.records.len() - 1,
        result.termination,
        trace.total_time_s(),
        trace.peak_bytes()
    );
    if let Some(path) = &args.trace_out {
        write_trace(trace, create(path)?)?;
    }
    if let Some(path) = &args.summary_out {
        let name = args.input.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        write_summary(&trace.summary(&name, &solver_name), create(path)?)?;
    }
    if let Some(path) = &args.output {
        write_bal(&problem.with_state(result.state), create(path)?)?;
    }
    Ok(())
}

fn solver_label(solver: SolverArg, precision: PrecisionArg) -> String {
    let base = match solver {
        SolverArg::Poba => "poba",
        SolverArg::Pcg => "pcg",
        SolverArg::PcgPower => "pcg-power",
        SolverArg::Direct => "direct",
        SolverArg::Post => "post",
    };
    match precision {
        PrecisionArg::Single => format!("{base}32"),
        PrecisionArg::Double => format!("{base}64"),
    }
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let problem = perturb(&load(&args.input)?, args.sigma, args.seed)?;
    let lin = Linearization::<f64>::assemble(&problem, &problem.initial_state())?;
    let system = lin.damped(args.lambda, DampingMode::Jacobi)?;
    let report = verify_error_bound(&system, args.max_order)?;
    println!(
        "rho(P) = {:.9} (power iteration {:.9} after {} iterations), bound holds for m <= {}",
        report.rho_p, report.power_estimate.rho, report.power_estimate.iterations, args.max_order
    );
    if let Some(path) = &args.report_out {
        let mut out = create(path)?;
        writeln!(out, "m,bound,measured_error")?;
        for (&(m, bound), &(_, measured)) in report.bound_curve.iter().zip(&report.measured_error_curve) {
            writeln!(out, "{m},{bound:e},{measured:e}")?;
        }
        out.flush()?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let solvers = args.solvers.iter().map(|s| s.parse::<SolverId>()).collect::<Result<Vec<_>, _>>()?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.problems)
        .with_context(|| format!("reading {}", args.problems.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    if paths.is_empty() {
        bail!("no problem files in {}", args.problems.display());
    }
    let problems = paths
        .iter()
        .map(|p| Ok((p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), load(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mode = if args.parallel { BenchMode::Parallel } else { BenchMode::Sequential };
    let output = run_benchmark(&problems, &solvers, args.sigma, args.seed, mode)?;

    fs::create_dir_all(&args.out)?;
    let grid = default_alpha_grid(args.alpha_points);
    let mut solved = Vec::new();
    for &tau in &args.tau {
        let curves = performance_profile(&output.records, tau, &grid)?;
        write_profile_csv(&curves, create(&args.out.join(format!("profile_tau_{tau}.csv")))?)?;
        solved.extend(solved_table(&output.records, tau)?);
    }
    write_solved_csv(&solved, create(&args.out.join("solved.csv"))?)?;
    serde_json::to_writer_pretty(create(&args.out.join("runs.json"))?, &output.records)?;
    serde_json::to_writer_pretty(create(&args.out.join("summaries.json"))?, &output.summaries)?;
    for row in &solved {
        println!(
            "tau {:<6} {:<10} alpha=1 {:>5.1}%  alpha=3 {:>5.1}%  alpha=inf {:>5.1}%",
            row.tau, row.solver, row.at_1, row.at_3, row.at_inf
        );
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    use poba::synthetic::*;
    let problem = match args.scene {
        Scene::Ladybug => ladybug_like(args.seed),
        Scene::Ring => {
            if args.cameras < 2 || args.points == 0 {
                bail!("a ring scene needs at least 2 cameras and 1 point");
            }
            ring_scene(args.cameras, args.points, args.noise, args.seed)
        }
        Scene::Random => random_small_problem(args.seed),
        Scene::Fixture => tiny_fixture(),
        Scene::TwoComponent => two_component_scene(args.cameras.max(2), args.points.max(1), args.seed),
    };
    write_bal(&problem, create(&args.output)?)?;
    println!(
        "wrote {} cameras, {} points, {} observations to {}",
        problem.num_cameras(),
        problem.num_points(),
        problem.num_observations(),
        args.output.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve(args) => solve(args),
        Command::Diagnose(args) => diagnose(args),
        Command::Bench(args) => bench(args),
        Command::Generate(args) => generate(args),
    }
}
