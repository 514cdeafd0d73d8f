use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iodmd::harness::{decades, run_experiment, Benchmark, ExperimentConfig, ExperimentRow};
use iodmd::io;
use iodmd_core::identify::{fit_iodmd, fit_reduced_iodmd};
use iodmd_core::plant::build_transport_plant;
use iodmd_core::snapshot::make_pairs;
use iodmd_core::stabilize::stabilize;
use iodmd_core::{
    excite, Error as CoreError, ExcitationKind, ExcitationSpec, Memory, PodOptions, PodSpectrum, ProjectionError, SimConfig, StabilizeConfig,
    StabilizeMode, Tolerances,
};

#[derive(Parser)]
#[command(name = "iodmd", version, about = "Input-output DMD identification and stabilization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep excitations × projection budgets on the transport benchmark.
    Run(RunArgs),
    /// Simulate the transport benchmark under one excitation and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Fit a (reduced) ioDMD model to a trajectory CSV.
    Identify(IdentifyArgs),
    /// Stabilize a discrete-time model against the data it was fitted to.
    Stabilize(StabilizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PodNorm {
    /// Mean L2 error per snapshot.
    Rms,
    /// Frobenius error relative to the snapshot matrix.
    Relative,
    /// Absolute Frobenius error.
    Absolute,
}

impl PodNorm {
    fn options(self) -> PodOptions {
        match self {
            Self::Rms => PodOptions {
                mode: ProjectionError::Absolute,
                per_snapshot: true,
            },
            Self::Relative => PodOptions::default(),
            Self::Absolute => PodOptions::absolute(),
        }
    }
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Transport speed.
    #[arg(long, default_value_t = 1.3)]
    speed: f64,
    /// Grid spacing of the upwind discretization.
    #[arg(long, default_value_t = 1e-3)]
    dx: f64,
    /// Time step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Final time.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

impl BenchmarkArgs {
    fn benchmark(&self) -> Benchmark {
        Benchmark {
            speed: self.speed,
            grid_spacing: self.dx,
            dt: self.dt,
            horizon: self.horizon,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated excitation tags.
    #[arg(long, default_value = "target,pe_noise,pe_step,ce_random,ce_shifted")]
    excitations: String,
    /// Either `1e-a..1e-b` (every decade in between) or a comma-separated list.
    #[arg(long, default_value = "1e-1..1e-8")]
    budgets: String,
    /// Absolute singular value cutoff of the pseudoinverse.
    #[arg(long, default_value_t = 0.0)]
    reg_eps: f64,
    #[arg(long)]
    stabilize: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PodNorm::Rms)]
    pod_norm: PodNorm,
    #[command(flatten)]
    bench: BenchmarkArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    excitation: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    bench: BenchmarkArgs,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// POD projection budget; omit for a full-order fit.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, value_enum, default_value_t = PodNorm::Rms)]
    pod_norm: PodNorm,
    #[arg(long, default_value_t = 0.0)]
    reg_eps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    DataFit,
    ModelFit,
}

#[derive(Args)]
struct StabilizeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training data; a reduced model is matched to the POD basis of the
    /// same order.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the stabilization report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Required stability margin: ρ(A) < 1 − tau.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Use L-BFGS with this many correction pairs.
    #[arg(long)]
    limited_memory: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::DataFit)]
    mode: ModeArg,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
}

fn parse_excitations(s: &str) -> anyhow::Result<Vec<ExcitationKind>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            ExcitationKind::from_tag(t).with_context(|| {
                let known: Vec<_> = ExcitationKind::ALL.iter().map(|k| k.tag()).collect();
                format!("unknown excitation `{t}` (expected one of {})", known.join(", "))
            })
        })
        .collect()
}

fn decade_exponent(s: &str) -> anyhow::Result<i32> {
    let s = s.trim();
    let exp = s.strip_prefix("1e").with_context(|| format!("range endpoint `{s}` is not of the form 1eK"))?;
    Ok(exp.parse()?)
}

fn parse_budgets(s: &str) -> anyhow::Result<Vec<f64>> {
    if let Some((a, b)) = s.split_once("..") {
        return Ok(decades(decade_exponent(a)?, decade_exponent(b)?));
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("invalid budget `{t}`")))
        .collect()
}

fn cmd_run(args: RunArgs) -> anyhow::Result<bool> {
    let cfg = ExperimentConfig {
        excitations: parse_excitations(&args.excitations)?,
        projection_budgets: parse_budgets(&args.budgets)?,
        regularization_eps: args.reg_eps,
        stabilize: args.stabilize,
        seed: args.seed,
        output_dir: Some(args.out.clone()),
        pod: args.pod_norm.options(),
        benchmark: args.bench.benchmark(),
        ..ExperimentConfig::default()
    };
    let rows = run_experiment(&cfg)?;
    print_rows(&rows);
    println!("tables written to {}", args.out.display());
    Ok(rows.iter().all(|r| r.error.is_none()))
}

fn print_rows(rows: &[ExperimentRow]) {
    println!("{:<11} {:>8} {:>6} {:>12} {:>12} {:>10} {:>10}", "excitation", "budget", "order", "raw_err", "error", "rho_raw", "rho");
    for r in rows {
        println!(
            "{:<11} {:>8.0e} {:>6} {:>12.4e} {:>12.4e} {:>10.6} {:>10.6}{}",
            r.excitation.tag(),
            r.budget,
            r.reduced_order,
            r.raw_output_error,
            r.rel_output_error,
            r.spectral_radius_before,
            r.spectral_radius_after,
            r.error.as_deref().map(|e| format!("  [{e}]")).unwrap_or_default()
        );
    }
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<bool> {
    let kind = ExcitationKind::from_tag(&args.excitation).with_context(|| format!("unknown excitation `{}`", args.excitation))?;
    let b = args.bench.benchmark();
    let plant = build_transport_plant(b.speed, b.grid_spacing)?;
    let sim = SimConfig::new(b.dt, b.horizon)?;
    let traj = excite::generate(&plant, &ExcitationSpec::new(kind, args.seed), &sim)?;
    io::save_trajectory(&args.out, &traj)?;
    println!("{} steps of {} states written to {}", traj.states().ncols(), traj.states().nrows(), args.out.display());
    Ok(true)
}

fn cmd_identify(args: IdentifyArgs) -> anyhow::Result<bool> {
    let traj = io::load_trajectory(&args.data)?;
    let pairs = make_pairs(&traj)?;
    let tol = Tolerances::with_eps(args.reg_eps);
    let fit = match args.budget {
        Some(budget) => {
            let basis = PodSpectrum::new(traj.states())?.basis(budget, args.pod_norm.options())?;
            fit_reduced_iodmd(&pairs, &basis, &tol)?
        }
        None => fit_iodmd(&pairs, &tol)?,
    };
    io::save_model(&args.out, &fit.model)?;
    println!(
        "order {}  rank {}  spectral radius {:.12}  relative residual {:.3e}",
        fit.model.order(),
        fit.rank,
        fit.model.spectral_radius()?,
        fit.relative_residual
    );
    Ok(true)
}

fn cmd_stabilize(args: StabilizeArgs) -> anyhow::Result<bool> {
    let model = io::load_model(&args.model)?;
    let mut cfg = StabilizeConfig {
        tau: args.tau,
        max_iterations: args.max_iterations,
        mode: match args.mode {
            ModeArg::DataFit => StabilizeMode::DataFit,
            ModeArg::ModelFit => StabilizeMode::ModelFit,
        },
        ..StabilizeConfig::default()
    };
    if let Some(k) = args.limited_memory {
        cfg.memory = Memory::Limited(k);
    }
    let pairs = match &args.data {
        Some(path) => {
            let traj = io::load_trajectory(path)?;
            let pairs = make_pairs(&traj)?;
            let n = model.order();
            Some(if n == traj.states().nrows() {
                pairs
            } else {
                let basis = PodSpectrum::new(traj.states())?.basis_of_order(n)?;
                pairs.project(basis.modes())?
            })
        }
        None if matches!(cfg.mode, StabilizeMode::DataFit) => bail!("--data is required in data-fit mode"),
        None => None,
    };
    match stabilize(&model, pairs.as_ref(), &cfg) {
        Ok((stable, report)) => {
            io::save_model(&args.out, &stable)?;
            if let Some(path) = &args.report {
                io::save_report(path, &report, None)?;
            }
            println!(
                "spectral radius {:.12} -> {:.12}  iterations {}  objective ratio {:.4}  relative change {:.3e}",
                report.initial_spectral_radius,
                report.final_spectral_radius,
                report.iterations_total,
                report.final_objective_ratio,
                report.relative_model_change
            );
            Ok(true)
        }
        Err(CoreError::NotStabilized(ns)) => {
            if let Some(path) = &args.report {
                io::save_report(path, &ns.report, Some(&ns.reason))?;
            }
            eprintln!("not stabilized: {}", ns);
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Stabilize(a) => cmd_stabilize(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
