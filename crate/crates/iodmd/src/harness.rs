//! Excitation × projection-budget sweep on the transport benchmark.
//!
//! For every excitation the training trajectory and its POD spectrum are
//! computed once; each budget then cuts a basis, fits a reduced ioDMD model,
//! optionally stabilizes it, and scores it by simulating the response to the
//! benchmark input `û` from the zero state against the plant's own response.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iodmd_core::excite::{self, excite_target};
use iodmd_core::identify::fit_reduced_iodmd;
use iodmd_core::plant::{build_transport_plant, relative_output_error, simulate_discrete};
use iodmd_core::snapshot::make_pairs;
use iodmd_core::stabilize::stabilize;
use iodmd_core::{
    ExcitationKind, ExcitationSpec, Matrix, PodOptions, PodSpectrum, ProjectionError, SimConfig, SnapshotPairs, StabilizeConfig, StateSpaceModel,
    Tolerances, Vector,
};
use rayon::prelude::*;

use crate::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "IODMD_THREADS";

/// A model counts as stable when `ρ(A) ≤ 1 − STABILITY_SLACK`.
pub const STABILITY_SLACK: f64 = 1e-12;

/// The transport plant and its simulation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Benchmark {
    pub speed: f64,
    pub grid_spacing: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for Benchmark {
    fn default() -> Self {
        Self {
            speed: 1.3,
            grid_spacing: 1e-3,
            dt: 1e-3,
            horizon: 1.0,
        }
    }
}

/// `10⁻¹, …, 10⁻⁸`.
pub fn default_budgets() -> Vec<f64> {
    decades(-1, -8)
}

/// Powers of ten from `10^from` down to `10^to`, each parsed from its decimal
/// literal so that `1e-8` here equals `1e-8` typed anywhere else.
pub fn decades(from: i32, to: i32) -> Vec<f64> {
    let step = if from >= to { -1 } else { 1 };
    let mut out = Vec::new();
    let mut e = from;
    loop {
        out.push(format!("1e{e}").parse().expect("valid literal"));
        if e == to {
            break;
        }
        e += step;
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub excitations: Vec<ExcitationKind>,
    /// Strictly decreasing.
    pub projection_budgets: Vec<f64>,
    pub regularization_eps: f64,
    pub stabilize: bool,
    pub seed: u64,
    /// Tables are written here when set.
    pub output_dir: Option<PathBuf>,
    /// Budgets are mean (per-snapshot) L2 projection errors by default.
    pub pod: PodOptions,
    pub benchmark: Benchmark,
    pub stabilizer: StabilizeConfig,
    /// Worker threads; falls back to `IODMD_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            excitations: ExcitationKind::ALL.to_vec(),
            projection_budgets: default_budgets(),
            regularization_eps: 0.0,
            stabilize: false,
            seed: 42,
            output_dir: None,
            pod: PodOptions {
                mode: ProjectionError::Absolute,
                per_snapshot: true,
            },
            benchmark: Benchmark::default(),
            stabilizer: StabilizeConfig::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.excitations.is_empty() {
            return Err(Error::Config("no excitations selected".into()));
        }
        for (i, k) in self.excitations.iter().enumerate() {
            if self.excitations[..i].contains(k) {
                return Err(Error::Config(format!("excitation `{k}` listed twice")));
            }
        }
        if self.projection_budgets.is_empty() {
            return Err(Error::Config("no projection budgets given".into()));
        }
        if self.projection_budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Config("projection budgets must be positive".into()));
        }
        if self.projection_budgets.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("projection budgets must be strictly decreasing".into()));
        }
        if !(self.regularization_eps.is_finite() && self.regularization_eps >= 0.0) {
            return Err(Error::Config("regularization eps must be nonnegative".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        self.stabilizer.validate()?;
        Ok(())
    }
}

/// One `(excitation, budget)` cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub excitation: ExcitationKind,
    pub budget: f64,
    pub reduced_order: usize,
    /// Error of the reported model: the stabilized one when stabilization ran
    /// and succeeded, the raw fit otherwise.
    pub rel_output_error: f64,
    pub raw_output_error: f64,
    pub spectral_radius_before: f64,
    pub spectral_radius_after: f64,
    pub stable_before: bool,
    /// Stabilization was needed and succeeded.
    pub stabilized: bool,
    pub stabilize_iterations: usize,
    pub iterations_to_first_stable: Option<usize>,
    pub objective_ratio: f64,
    pub relative_model_change: f64,
    /// Data generation and POD spectrum, shared by all cells of an excitation.
    pub data_time_s: f64,
    pub fit_time_s: f64,
    pub stabilize_time_s: f64,
    /// `data + fit + stabilize`.
    pub wall_time_s: f64,
    /// Set when any stage failed, including failure to stabilize.
    pub error: Option<String>,
}

impl ExperimentRow {
    fn failed(excitation: ExcitationKind, budget: f64, data_time_s: f64, error: String) -> Self {
        Self {
            excitation,
            budget,
            reduced_order: 0,
            rel_output_error: f64::NAN,
            raw_output_error: f64::NAN,
            spectral_radius_before: f64::NAN,
            spectral_radius_after: f64::NAN,
            stable_before: false,
            stabilized: false,
            stabilize_iterations: 0,
            iterations_to_first_stable: None,
            objective_ratio: f64::NAN,
            relative_model_change: f64::NAN,
            data_time_s,
            fit_time_s: 0.0,
            stabilize_time_s: 0.0,
            wall_time_s: data_time_s,
            error: Some(error),
        }
    }

    /// The reported model satisfies `ρ(A) < 1`.
    pub fn is_stable(&self) -> bool {
        self.spectral_radius_after <= 1.0 - STABILITY_SLACK
    }
}

struct Prepared {
    pairs: SnapshotPairs,
    spectrum: PodSpectrum,
    seconds: f64,
}

struct Evaluation {
    input: Matrix,
    reference: Matrix,
}

impl Evaluation {
    fn error(&self, model: &StateSpaceModel) -> iodmd_core::Result<f64> {
        let sim = simulate_discrete(model, &self.input, &Vector::zeros(model.order()))?;
        relative_output_error(&self.reference, sim.outputs())
    }
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

fn prepare(kind: ExcitationKind, cfg: &ExperimentConfig, plant: &iodmd_core::Plant, sim: &SimConfig) -> iodmd_core::Result<Prepared> {
    let start = Instant::now();
    let traj = excite::generate(plant, &ExcitationSpec::new(kind, cfg.seed), sim)?;
    let spectrum = PodSpectrum::new(traj.states())?;
    let pairs = make_pairs(&traj)?;
    Ok(Prepared {
        pairs,
        spectrum,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_cell(kind: ExcitationKind, budget: f64, prep: &Prepared, eval: &Evaluation, cfg: &ExperimentConfig) -> ExperimentRow {
    let fit_start = Instant::now();
    let fitted = prep
        .spectrum
        .basis(budget, cfg.pod)
        .and_then(|basis| Ok((fit_reduced_iodmd(&prep.pairs, &basis, &Tolerances::with_eps(cfg.regularization_eps))?, basis)))
        .and_then(|(fit, basis)| {
            let rho = fit.model.spectral_radius()?;
            let err = eval.error(&fit.model)?;
            Ok((fit.model, basis, rho, err))
        });
    let fit_time_s = fit_start.elapsed().as_secs_f64();
    let (model, basis, rho, raw_err) = match fitted {
        Ok(v) => v,
        Err(e) => return ExperimentRow::failed(kind, budget, prep.seconds, format!("fit: {e}")),
    };
    let stable_before = rho <= 1.0 - STABILITY_SLACK;
    let mut row = ExperimentRow {
        excitation: kind,
        budget,
        reduced_order: basis.order(),
        rel_output_error: raw_err,
        raw_output_error: raw_err,
        spectral_radius_before: rho,
        spectral_radius_after: rho,
        stable_before,
        stabilized: false,
        stabilize_iterations: 0,
        iterations_to_first_stable: stable_before.then_some(0),
        objective_ratio: if stable_before { 1.0 } else { f64::NAN },
        relative_model_change: 0.0,
        data_time_s: prep.seconds,
        fit_time_s,
        stabilize_time_s: 0.0,
        wall_time_s: prep.seconds + fit_time_s,
        error: None,
    };
    if !cfg.stabilize || stable_before {
        return row;
    }
    let stab_start = Instant::now();
    let outcome = prep
        .pairs
        .project(basis.modes())
        .and_then(|reduced| stabilize(&model, Some(&reduced), &cfg.stabilizer))
        .and_then(|(m, report)| Ok((eval.error(&m)?, report)));
    row.stabilize_time_s = stab_start.elapsed().as_secs_f64();
    row.wall_time_s += row.stabilize_time_s;
    let report = match outcome {
        Ok((err, report)) => {
            row.rel_output_error = err;
            row.stabilized = true;
            report
        }
        Err(iodmd_core::Error::NotStabilized(ns)) => {
            row.error = Some(format!("not_stabilized: {}", ns.reason));
            ns.report
        }
        Err(e) => {
            row.error = Some(format!("stabilize: {e}"));
            return row;
        }
    };
    row.spectral_radius_after = if row.stabilized { report.final_spectral_radius } else { rho };
    row.stabilize_iterations = report.iterations_total;
    row.iterations_to_first_stable = report.iterations_to_first_stable;
    row.objective_ratio = report.final_objective_ratio;
    row.relative_model_change = report.relative_model_change;
    row
}

/// Runs the sweep. Cells are computed in parallel; the rows come back in
/// excitation-major, budget-minor order regardless of scheduling, and stage
/// failures are recorded in the affected rows rather than aborting the run.
/// Writes the tables when an output directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let b = cfg.benchmark;
    let plant = build_transport_plant(b.speed, b.grid_spacing)?;
    let sim = SimConfig::new(b.dt, b.horizon)?;
    let target = excite_target(&plant, &sim)?;
    let eval = Evaluation {
        input: target.inputs().clone(),
        reference: target.outputs().clone(),
    };
    drop(target);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads.or_else(threads_from_env) {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let rows = pool.install(|| {
        let prepared: Vec<_> = cfg.excitations.par_iter().map(|&k| prepare(k, cfg, &plant, &sim)).collect();
        let cells: Vec<(usize, f64)> = (0..cfg.excitations.len())
            .flat_map(|i| cfg.projection_budgets.iter().map(move |&b| (i, b)))
            .collect();
        cells
            .par_iter()
            .map(|&(i, budget)| {
                let kind = cfg.excitations[i];
                match &prepared[i] {
                    Ok(prep) => run_cell(kind, budget, prep, &eval, cfg),
                    Err(e) => ExperimentRow::failed(kind, budget, 0.0, format!("data: {e}")),
                }
            })
            .collect::<Vec<_>>()
    });
    if let Some(dir) = &cfg.output_dir {
        emit_tables(&rows, dir)?;
    }
    Ok(rows)
}

/// Shortest round-trip formatting; NaN becomes an empty field.
fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

fn ordered<T: PartialEq + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// `budget` down the rows, one column per excitation.
fn wide_table(rows: &[ExperimentRow], value: impl Fn(&ExperimentRow) -> String) -> String {
    let kinds = ordered(rows.iter().map(|r| r.excitation));
    let budgets = ordered(rows.iter().map(|r| r.budget.to_bits()));
    let mut out = String::from("budget");
    for k in &kinds {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for bits in budgets {
        out.push_str(&num(f64::from_bits(bits)));
        for k in &kinds {
            out.push(',');
            if let Some(r) = rows.iter().find(|r| r.excitation == *k && r.budget.to_bits() == bits) {
                out.push_str(&value(r));
            }
        }
        out.push('\n');
    }
    out
}

fn write_table(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `errors.csv`, `errors_raw.csv`, `orders.csv`, `runtimes.csv` and
/// `stabilization.csv`. Everything except `runtimes.csv` is a deterministic
/// function of the rows' numerical content.
pub fn emit_tables(rows: &[ExperimentRow], dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Config("no experiment rows to write".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write_table(dir, "errors.csv", &wide_table(rows, |r| num(r.rel_output_error)))?,
        write_table(dir, "errors_raw.csv", &wide_table(rows, |r| num(r.raw_output_error)))?,
        write_table(
            dir,
            "orders.csv",
            &wide_table(rows, |r| if r.reduced_order > 0 { r.reduced_order.to_string() } else { String::new() }),
        )?,
    ];

    let mut runtimes = String::from("excitation,budget,data_s,fit_s,stabilize_s,wall_s\n");
    for r in rows {
        let _ = writeln!(
            runtimes,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.excitation,
            num(r.budget),
            r.data_time_s,
            r.fit_time_s,
            r.stabilize_time_s,
            r.wall_time_s
        );
    }
    written.push(write_table(dir, "runtimes.csv", &runtimes)?);

    let mut stab = String::from(
        "excitation,budget,reduced_order,spectral_radius_before,stable_before,stabilized,spectral_radius_after,\
         iterations,iterations_to_first_stable,objective_ratio,relative_model_change,raw_output_error,rel_output_error,status\n",
    );
    for r in rows {
        let status = match &r.error {
            Some(e) => e.replace([',', '\n'], ";"),
            None if r.stabilized => "stabilized".into(),
            None if r.stable_before => "stable".into(),
            None => "unstable".into(),
        };
        let _ = writeln!(
            stab,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.excitation,
            num(r.budget),
            r.reduced_order,
            num(r.spectral_radius_before),
            r.stable_before,
            r.stabilized,
            num(r.spectral_radius_after),
            r.stabilize_iterations,
            r.iterations_to_first_stable.map(|n| n.to_string()).unwrap_or_default(),
            num(r.objective_ratio),
            num(r.relative_model_change),
            num(r.raw_output_error),
            num(r.rel_output_error),
            status
        );
    }
    written.push(write_table(dir, "stabilization.csv", &stab)?);
    Ok(written)
}
