//! The benchmark source system and the simulators used to generate and
//! evaluate trajectories.
//!
//! The transport plant is `ż = −a·∂z/∂x` on `[0, 1]`, fed at the left boundary
//! and observed at the right, discretized by first-order upwind differences
//! on `N = 1/Δx` cells.

use alloc::vec::Vec;

use nalgebra::LU;

use crate::identify::{StateSpaceModel, TimeDomain};
use crate::{Error, Matrix, Result, TrajectoryData, Vector};

/// Which input sample drives an implicit Euler step from `t_k` to `t_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputTiming {
    /// `u_{k+1}`, the implicit stage value.
    #[default]
    EndOfStep,
    /// `u_k`.
    StartOfStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimMethod {
    #[default]
    ImplicitEuler,
    DiscreteStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub method: SimMethod,
    pub input_timing: InputTiming,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            horizon,
            method: SimMethod::ImplicitEuler,
            input_timing: InputTiming::default(),
        };
        cfg.steps()?;
        Ok(cfg)
    }

    pub fn with_timing(mut self, timing: InputTiming) -> Self {
        self.input_timing = timing;
        self
    }

    /// Number of steps `K = horizon/dt`; the ratio must be a positive integer.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("time step and horizon must be positive"));
        }
        let ratio = self.horizon / self.dt;
        let k = libm::round(ratio);
        if k < 1.0 || (ratio - k).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::invalid("horizon must be an integer multiple of the time step"));
        }
        Ok(k as usize)
    }

    /// Sample times `t_0 … t_K`.
    pub fn times(&self) -> Result<Vec<f64>> {
        let k = self.steps()?;
        Ok((0..=k).map(|i| i as f64 * self.dt).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Transport {
    speed: f64,
    dx: f64,
}

/// Continuous-time LTI plant `ẋ = A·x + B·u`, `y = C·x`.
#[derive(Debug, Clone)]
pub struct Plant {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    transport: Option<Transport>,
}

impl Plant {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::mismatch("plant state matrix columns", n, a.ncols()));
        }
        if b.nrows() != n {
            return Err(Error::mismatch("plant input matrix rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::mismatch("plant output matrix columns", n, c.ncols()));
        }
        crate::linalg::ensure_finite(&a, "plant state matrix")?;
        Ok(Self { a, b, c, transport: None })
    }

    pub fn a_matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn b_matrix(&self) -> &Matrix {
        &self.b
    }

    pub fn c_matrix(&self) -> &Matrix {
        &self.c
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_square(&self) -> bool {
        self.input_dim() == self.output_dim()
    }

    pub fn transport_speed(&self) -> Option<f64> {
        self.transport.map(|t| t.speed)
    }

    pub fn grid_spacing(&self) -> Option<f64> {
        self.transport.map(|t| t.dx)
    }

    /// Number of grid cells (the state dimension).
    pub fn grid_size(&self) -> usize {
        self.state_dim()
    }

    /// Exact one-step map of implicit Euler with start-of-step input timing:
    /// `((I − dt·A)⁻¹, (I − dt·A)⁻¹·dt·B, C, 0)`.
    pub fn implicit_euler_model(&self, dt: f64) -> Result<StateSpaceModel> {
        let n = self.state_dim();
        let m = Matrix::identity(n, n) - &self.a * dt;
        let lu = LU::new(m);
        let phi = lu
            .try_inverse()
            .ok_or_else(|| Error::Numeric("implicit Euler matrix is singular".into()))?;
        let gamma = &phi * &self.b * dt;
        StateSpaceModel::new(
            phi,
            gamma,
            self.c.clone(),
            Matrix::zeros(self.output_dim(), self.input_dim()),
            TimeDomain::Discrete { step_width: dt },
        )
    }
}

/// Upwind transport plant with `N = round(1/dx)` cells: `A` has `−a/Δx` on the
/// diagonal and `+a/Δx` on the subdiagonal, `B = (a/Δx)·e₁`, `C = e_Nᵀ`.
pub fn build_transport_plant(speed: f64, dx: f64) -> Result<Plant> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::invalid("transport speed must be positive"));
    }
    if !(dx.is_finite() && dx > 0.0 && dx <= 1.0) {
        return Err(Error::invalid("grid spacing must lie in (0, 1]"));
    }
    let n = libm::round(1.0 / dx) as usize;
    let rate = speed / dx;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -rate;
        if i > 0 {
            a[(i, i - 1)] = rate;
        }
    }
    let mut b = Matrix::zeros(n, 1);
    b[(0, 0)] = rate;
    let mut c = Matrix::zeros(1, n);
    c[(0, n - 1)] = 1.0;
    let mut plant = Plant::new(a, b, c)?;
    plant.transport = Some(Transport { speed, dx });
    Ok(plant)
}

/// Solver for `(I − dt·A)·x = rhs`, factored once per simulation.
enum StepSolver {
    /// Forward substitution on the sparse lower-triangular matrix.
    Lower { diag: Vec<f64>, rows: Vec<Vec<(usize, f64)>> },
    Dense(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl StepSolver {
    fn new(a: &Matrix, dt: f64) -> Result<Self> {
        let n = a.nrows();
        let lower = (0..n).all(|i| (i + 1..n).all(|j| a[(i, j)] == 0.0));
        if lower {
            let mut diag = Vec::with_capacity(n);
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                let d = 1.0 - dt * a[(i, i)];
                if d == 0.0 || !d.is_finite() {
                    return Err(Error::Numeric("implicit Euler matrix is singular".into()));
                }
                diag.push(d);
                rows.push((0..i).filter(|&j| a[(i, j)] != 0.0).map(|j| (j, -dt * a[(i, j)])).collect());
            }
            return Ok(Self::Lower { diag, rows });
        }
        let lu = LU::new(Matrix::identity(n, n) - a * dt);
        if !lu.is_invertible() {
            return Err(Error::Numeric("implicit Euler matrix is singular".into()));
        }
        Ok(Self::Dense(lu))
    }

    fn solve(&self, rhs: &mut Vector) {
        match self {
            Self::Lower { diag, rows } => {
                for i in 0..diag.len() {
                    let mut acc = rhs[i];
                    for &(j, v) in &rows[i] {
                        acc -= v * rhs[j];
                    }
                    rhs[i] = acc / diag[i];
                }
            }
            Self::Dense(lu) => {
                let solved = lu.solve_mut(rhs);
                debug_assert!(solved);
            }
        }
    }
}

/// Implicit Euler simulation `x_{k+1} = (I − dt·A)⁻¹(x_k + dt·B·u_j)` with `j`
/// chosen by the input timing; `y_k = C·x_k`. `u` holds one column per sample
/// `t_0 … t_K`.
pub fn simulate_continuous(plant: &Plant, u: &Matrix, x0: &Vector, cfg: &SimConfig) -> Result<TrajectoryData> {
    if cfg.method != SimMethod::ImplicitEuler {
        return Err(Error::invalid("continuous simulation requires the implicit Euler method"));
    }
    let k = cfg.steps()?;
    let n = plant.state_dim();
    if u.nrows() != plant.input_dim() {
        return Err(Error::mismatch("input signal channels", plant.input_dim(), u.nrows()));
    }
    if u.ncols() != k + 1 {
        return Err(Error::mismatch("input signal samples", k + 1, u.ncols()));
    }
    if x0.len() != n {
        return Err(Error::mismatch("initial state length", n, x0.len()));
    }
    let solver = StepSolver::new(&plant.a, cfg.dt)?;
    let bdt = &plant.b * cfg.dt;
    let mut states = Matrix::zeros(n, k + 1);
    states.set_column(0, x0);
    let mut x = x0.clone();
    for step in 0..k {
        let j = match cfg.input_timing {
            InputTiming::EndOfStep => step + 1,
            InputTiming::StartOfStep => step,
        };
        x.gemv(1.0, &bdt, &u.column(j), 1.0);
        solver.solve(&mut x);
        states.set_column(step + 1, &x);
    }
    let outputs = &plant.c * &states;
    TrajectoryData::new(states, u.clone(), outputs, cfg.dt)
}

/// Iterates `x_{k+1} = A·x_k + B·u_k`, recording `y_k = C·x_k + D·u_k` for every
/// column of `u`.
pub fn simulate_discrete(model: &StateSpaceModel, u: &Matrix, x0: &Vector) -> Result<TrajectoryData> {
    let h = model
        .step_width()
        .ok_or_else(|| Error::invalid("discrete simulation of a continuous-time model"))?;
    if u.nrows() != model.inputs() {
        return Err(Error::mismatch("input signal channels", model.inputs(), u.nrows()));
    }
    if x0.len() != model.order() {
        return Err(Error::mismatch("initial state length", model.order(), x0.len()));
    }
    let samples = u.ncols();
    let mut states = Matrix::zeros(model.order(), samples);
    let mut x = x0.clone();
    for k in 0..samples {
        states.set_column(k, &x);
        if k + 1 < samples {
            let mut next = model.a() * &x;
            next.gemv(1.0, model.b(), &u.column(k), 1.0);
            x = next;
        }
    }
    let outputs = model.c() * &states + model.d() * u;
    TrajectoryData::new(states, u.clone(), outputs, h)
}

/// `‖y_ref − y_test‖_F / ‖y_ref‖_F` over all channels and samples.
pub fn relative_output_error(y_ref: &Matrix, y_test: &Matrix) -> Result<f64> {
    if y_ref.shape() != y_test.shape() {
        return Err(Error::mismatch("output samples", y_ref.len(), y_test.len()));
    }
    let nrm = y_ref.norm();
    if nrm == 0.0 {
        return Err(Error::invalid("reference output has zero norm"));
    }
    Ok((y_ref - y_test).norm() / nrm)
}
