//! Post-hoc stabilization of identified discrete-time models.
//!
//! Solves
//!
//! ```text
//! min ‖[X₁; Y₀] − [Ã B̃; C̃ D̃]·[X₀; U₀]‖²_F   s.t.   ρ(Ã) < 1 − τ
//! ```
//!
//! (or, in [`StabilizeMode::ModelFit`], the distance to the identified blocks)
//! by BFGS on the exact penalty `φ = f + μ·max(0, ρ(Ã) − (1 − τ))`, starting
//! from the identified model. The penalty parameter grows tenfold whenever
//! the iteration stalls at an infeasible point. Iteration stops as soon as an
//! iterate is stable and its objective is within the allowed multiple of the
//! initial objective.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::bfgs::{weak_wolfe, InverseHessian, LineSearch, WolfeParams};
use crate::identify::{data_residual, StateSpaceModel};
use crate::linalg::{self, spectral_radius_gradient};
use crate::snapshot::SnapshotPairs;
use crate::{Error, Matrix, Result, Vector};

/// Strict-inequality slack: a model counts as stable when `ρ ≤ 1 − τ − 1e-12`.
const STRICT_SLACK: f64 = 1e-12;
/// The penalty kink sits slightly inside the stable region so that iterates
/// oscillating around it remain strictly stable.
const PENALTY_MARGIN: f64 = 1e-8;
const INITIAL_PENALTY: f64 = 1.0;
const MAX_PENALTY: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StabilizeMode {
    /// Least-squares misfit on the snapshot data.
    #[default]
    DataFit,
    /// Frobenius distance to the identified blocks; ignores data.
    ModelFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Memory {
    #[default]
    Full,
    /// Keep the given number of most recent update pairs.
    Limited(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizeConfig {
    /// Stability margin: the target is `ρ(Ã) < 1 − tau`.
    pub tau: f64,
    /// A successful result satisfies `f ≤ objective_budget_factor · f(initial)`.
    /// Not applicable when the initial objective vanishes (model-fit mode, or
    /// data reproduced exactly); the solver then runs to a stable stationary
    /// point.
    pub objective_budget_factor: f64,
    /// Stationarity tolerance on the penalty gradient norm.
    pub opt_tol: f64,
    pub max_iterations: usize,
    pub memory: Memory,
    pub mode: StabilizeMode,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            objective_budget_factor: 1000.0,
            opt_tol: 1e-8,
            max_iterations: 2000,
            memory: Memory::Full,
            mode: StabilizeMode::DataFit,
        }
    }
}

impl StabilizeConfig {
    pub fn limited_memory(mut self, size: usize) -> Self {
        self.memory = Memory::Limited(size);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("stability margin must lie in [0, 1)"));
        }
        if !(self.objective_budget_factor > 0.0 && self.opt_tol > 0.0) {
            return Err(Error::invalid("objective budget and tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("iteration limit must be positive"));
        }
        if self.memory == Memory::Limited(0) {
            return Err(Error::invalid("limited memory size must be positive"));
        }
        Ok(())
    }

    fn stable_bound(&self) -> f64 {
        1.0 - self.tau - STRICT_SLACK
    }
}

/// State after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub penalty: f64,
    /// Penalty function value `f + μ·max(0, ρ − target)`.
    pub merit: f64,
    pub objective: f64,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeReport {
    pub iterations_total: usize,
    /// Accepted iterations until the first stable iterate (zero when the
    /// input was already stable; `None` when no iterate was stable).
    pub iterations_to_first_stable: Option<usize>,
    pub function_evaluations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// `f(final) / f(initial)`; one when both vanish, infinite when only the
    /// initial objective does.
    pub final_objective_ratio: f64,
    pub initial_spectral_radius: f64,
    pub final_spectral_radius: f64,
    /// `‖vec[A_s B_s; C_s D_s] − vec[A B; C D]‖ / ‖vec[A B; C D]‖`.
    pub relative_model_change: f64,
    pub final_penalty: f64,
    /// The returned model is stable and within the objective budget.
    pub converged: bool,
    /// A spectral-radius gradient was taken at a modulus tie.
    pub nonsmooth_encountered: bool,
    /// One record per accepted step, starting with the initial point.
    pub trace: Vec<IterateRecord>,
}

#[derive(Debug, Clone)]
pub struct NotStabilized {
    /// Iterate with the smallest spectral radius encountered.
    pub best: StateSpaceModel,
    pub report: StabilizeReport,
    pub reason: String,
}

impl fmt::Display for NotStabilized {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (best spectral radius {:.6e} after {} iterations)",
            self.reason, self.report.final_spectral_radius, self.report.iterations_total
        )
    }
}

struct Problem {
    mode: StabilizeMode,
    order: usize,
    shape: (usize, usize),
    regressors: Matrix,
    targets: Matrix,
    reference: Matrix,
    kink: f64,
}

#[derive(Clone)]
struct Point {
    g: Matrix,
    f: f64,
    grad_f: Matrix,
    radius: f64,
    grad_radius: Option<Matrix>,
    nonsmooth: bool,
}

impl Problem {
    fn evaluate(&self, g: Matrix) -> Result<Point> {
        let (f, grad_f) = match self.mode {
            StabilizeMode::DataFit => {
                let r = &g * &self.regressors - &self.targets;
                let grad = &r * self.regressors.transpose() * 2.0;
                (r.norm_squared(), grad)
            }
            StabilizeMode::ModelFit => {
                let d = &g - &self.reference;
                (d.norm_squared(), d * 2.0)
            }
        };
        let a = g.view((0, 0), (self.order, self.order)).into_owned();
        let (radius, grad_radius, nonsmooth) = {
            let radius = linalg::spectral_radius(&a)?;
            if radius > self.kink {
                let rg = spectral_radius_gradient(&a)?;
                (radius, Some(rg.gradient), rg.nonsmooth)
            } else {
                (radius, None, false)
            }
        };
        Ok(Point {
            g,
            f,
            grad_f,
            radius,
            grad_radius,
            nonsmooth,
        })
    }

    fn merit(&self, p: &Point, mu: f64) -> f64 {
        p.f + mu * (p.radius - self.kink).max(0.0)
    }

    fn merit_gradient(&self, p: &Point, mu: f64) -> Vector {
        let mut grad = p.grad_f.clone();
        if let Some(gr) = &p.grad_radius {
            let mut block = grad.view_mut((0, 0), (self.order, self.order));
            block += gr * mu;
        }
        Vector::from_column_slice(grad.as_slice())
    }

    fn reshape(&self, z: &Vector) -> Matrix {
        Matrix::from_column_slice(self.shape.0, self.shape.1, z.as_slice())
    }
}

fn objective_ratio(f: f64, f0: f64) -> f64 {
    if f0 > 0.0 {
        f / f0
    } else if f == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Enforces `ρ(A) < 1 − τ` on an identified discrete-time model.
///
/// `pairs` must match the model dimensions in data-fit mode and is ignored in
/// model-fit mode. Already stable models are returned unchanged. When no
/// stable iterate within the objective budget is found, the result is an
/// [`Error::NotStabilized`] carrying the best iterate.
pub fn stabilize(
    model: &StateSpaceModel,
    pairs: Option<&SnapshotPairs>,
    cfg: &StabilizeConfig,
) -> Result<(StateSpaceModel, StabilizeReport)> {
    cfg.validate()?;
    let time_domain = model.time_domain();
    if !model.is_discrete() {
        return Err(Error::invalid("stabilization applies to discrete-time models"));
    }
    let order = model.order();
    if order == 0 {
        return Err(Error::invalid("cannot stabilize an empty model"));
    }
    let reference = model.block_matrix();
    let (regressors, targets) = match cfg.mode {
        StabilizeMode::DataFit => {
            let pairs = pairs.ok_or_else(|| Error::invalid("data-fit stabilization needs snapshot pairs"))?;
            data_residual(model, pairs)?;
            (pairs.stacked_regressors(), pairs.stacked_targets())
        }
        StabilizeMode::ModelFit => (Matrix::zeros(0, 0), Matrix::zeros(0, 0)),
    };
    let problem = Problem {
        mode: cfg.mode,
        order,
        shape: reference.shape(),
        regressors,
        targets,
        reference: reference.clone(),
        kink: cfg.stable_bound() + STRICT_SLACK - PENALTY_MARGIN,
    };
    let stable = |p: &Point| p.radius <= cfg.stable_bound();

    let mut current = problem.evaluate(reference.clone())?;
    let f0 = current.f;
    let budget_applies = cfg.mode == StabilizeMode::DataFit && f0 > 0.0;
    let budget = cfg.objective_budget_factor * f0;
    let acceptable = |p: &Point| stable(p) && (!budget_applies || p.f <= budget);
    let mut report = StabilizeReport {
        iterations_total: 0,
        iterations_to_first_stable: None,
        function_evaluations: 1,
        initial_objective: f0,
        final_objective: f0,
        final_objective_ratio: 1.0,
        initial_spectral_radius: current.radius,
        final_spectral_radius: current.radius,
        relative_model_change: 0.0,
        final_penalty: INITIAL_PENALTY,
        converged: true,
        nonsmooth_encountered: false,
        trace: Vec::new(),
    };
    if stable(&current) {
        report.iterations_to_first_stable = Some(0);
        return Ok((model.clone(), report));
    }
    report.converged = false;
    let record = |iteration: usize, mu: f64, p: &Point| IterateRecord {
        iteration,
        penalty: mu,
        merit: problem.merit(p, mu),
        objective: p.f,
        spectral_radius: p.radius,
    };
    report.trace.push(record(0, INITIAL_PENALTY, &current));

    let nvars = reference.len();
    let mut hessian = match cfg.memory {
        Memory::Full => InverseHessian::full(nvars),
        Memory::Limited(k) => InverseHessian::limited(k),
    };
    let wolfe = WolfeParams::default();
    let mut mu = INITIAL_PENALTY;
    let mut best_feasible: Option<Point> = None;
    let mut least_unstable = current.clone();
    let mut evaluations = 1usize;
    let mut nonsmooth = false;

    let consider = |p: &Point, best: &mut Option<Point>, least: &mut Point| {
        if stable(p) && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(p.clone());
        }
        if p.radius < least.radius {
            *least = p.clone();
        }
    };

    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        let phi = problem.merit(&current, mu);
        let grad = problem.merit_gradient(&current, mu);
        let mut stalled = grad.norm() <= cfg.opt_tol;
        if !stalled {
            let mut dir = -hessian.apply(&grad);
            let mut slope = grad.dot(&dir);
            if !(slope < 0.0) {
                hessian.reset();
                dir = -grad.clone();
                slope = -grad.norm_squared();
            }
            let z = Vector::from_column_slice(current.g.as_slice());
            let search = weak_wolfe(phi, slope, &wolfe, |t| {
                let trial = problem.evaluate(problem.reshape(&(&z + &dir * t)))?;
                evaluations += 1;
                nonsmooth |= trial.nonsmooth;
                consider(&trial, &mut best_feasible, &mut least_unstable);
                let d = problem.merit_gradient(&trial, mu).dot(&dir);
                Ok((problem.merit(&trial, mu), d, trial))
            })?;
            match search {
                LineSearch::Accepted { point, .. } => {
                    iteration += 1;
                    let s = Vector::from_column_slice(point.g.as_slice()) - &z;
                    let y = problem.merit_gradient(&point, mu) - &grad;
                    hessian.update(&s, &y);
                    current = point;
                    report.trace.push(record(iteration, mu, &current));
                    if stable(&current) {
                        report.iterations_to_first_stable.get_or_insert(iteration);
                        if budget_applies && acceptable(&current) {
                            report.converged = true;
                            break;
                        }
                    }
                    continue;
                }
                LineSearch::Failed => stalled = true,
            }
        }
        if stalled {
            if stable(&current) {
                report.converged = acceptable(&current);
                break;
            }
            if mu >= MAX_PENALTY {
                break;
            }
            // The quasi-Newton metric is kept: near a kink of the spectral
            // radius it carries the curvature that makes descent possible.
            mu *= 10.0;
            // A stall with no progress still consumes an iteration so the
            // loop is bounded by max_iterations.
            iteration += 1;
        }
    }

    report.iterations_total = iteration;
    report.function_evaluations = evaluations;
    report.final_penalty = mu;
    report.nonsmooth_encountered = nonsmooth;

    let finish = |p: &Point, report: &mut StabilizeReport| -> Result<StateSpaceModel> {
        report.final_objective = p.f;
        report.final_objective_ratio = objective_ratio(p.f, f0);
        report.final_spectral_radius = p.radius;
        let base = reference.norm();
        let diff = (&p.g - &reference).norm();
        report.relative_model_change = if base > 0.0 { diff / base } else { diff };
        StateSpaceModel::from_blocks(&p.g, order, time_domain)
    };

    let chosen = if report.converged || (acceptable(&current) && best_feasible.as_ref().is_none_or(|b| current.f <= b.f)) {
        Some(current)
    } else {
        best_feasible.as_ref().filter(|b| acceptable(b)).cloned()
    };
    if let Some(p) = chosen {
        report.converged = true;
        let m = finish(&p, &mut report)?;
        return Ok((m, report));
    }
    let (best, reason) = match best_feasible {
        Some(p) => (p, "every stable iterate exceeds the objective budget"),
        None => (least_unstable, "no stable iterate found within the iteration limit"),
    };
    let best = finish(&best, &mut report)?;
    Err(Error::NotStabilized(alloc::boxed::Box::new(NotStabilized {
        best,
        report,
        reason: reason.into(),
    })))
}
