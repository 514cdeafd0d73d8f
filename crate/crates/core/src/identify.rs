//! DMD-family fits of linear state-space models to snapshot pairs.
//!
//! * [`fit_dmd`]: state-only operator, expressed in the retained left
//!   singular basis of `X₀`.
//! * [`fit_dmdc`]: `[A B] = X₁·[X₀; U₀]⁺`.
//! * [`fit_iodmd`]: `[A B; C D] = [X₁; Y₀]·[X₀; U₀]⁺`.
//! * [`fit_reduced_iodmd`]: the same solve after projecting the states
//!   through an orthonormal basis `Q`.
//!
//! The data equation is `Y₀ = C·X₀ + D·U₀`, so fitted `C` and `D` map the state
//! and input at step `k` to the output at step `k`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{self, pinv_solve, Tolerances};
use crate::pod::PodBasis;
use crate::snapshot::{stack_rows, SnapshotPairs};
use crate::{Complex, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDomain {
    Discrete { step_width: f64 },
    Continuous,
}

/// `x⁺ = A·x + B·u`, `y = C·x + D·u` (discrete) or `ẋ = …` (continuous).
///
/// Missing inputs or outputs are represented by zero-width blocks, e.g. a
/// state-only model has `B: r×0`, `C: 0×r`, `D: 0×0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
    time_domain: TimeDomain,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, time_domain: TimeDomain) -> Result<Self> {
        let r = a.nrows();
        if a.ncols() != r {
            return Err(Error::mismatch("state matrix columns", r, a.ncols()));
        }
        if b.nrows() != r {
            return Err(Error::mismatch("input matrix rows", r, b.nrows()));
        }
        if c.ncols() != r {
            return Err(Error::mismatch("output matrix columns", r, c.ncols()));
        }
        if d.nrows() != c.nrows() {
            return Err(Error::mismatch("feed-through rows", c.nrows(), d.nrows()));
        }
        if d.ncols() != b.ncols() {
            return Err(Error::mismatch("feed-through columns", b.ncols(), d.ncols()));
        }
        if let TimeDomain::Discrete { step_width } = time_domain {
            if !(step_width.is_finite() && step_width > 0.0) {
                return Err(Error::invalid("discrete models need a positive step width"));
            }
        }
        Ok(Self { a, b, c, d, time_domain })
    }

    /// Splits `[A B; C D]` at row `order` and column `order`.
    pub fn from_blocks(g: &Matrix, order: usize, time_domain: TimeDomain) -> Result<Self> {
        if g.nrows() < order || g.ncols() < order {
            return Err(Error::invalid("block matrix is smaller than the model order"));
        }
        let (p, m) = (g.nrows() - order, g.ncols() - order);
        Self::new(
            g.view((0, 0), (order, order)).into_owned(),
            g.view((0, order), (order, m)).into_owned(),
            g.view((order, 0), (p, order)).into_owned(),
            g.view((order, order), (p, m)).into_owned(),
            time_domain,
        )
    }

    /// `[A B; C D]`.
    pub fn block_matrix(&self) -> Matrix {
        let r = self.order();
        let (m, p) = (self.inputs(), self.outputs());
        let mut g = Matrix::zeros(r + p, r + m);
        g.view_mut((0, 0), (r, r)).copy_from(&self.a);
        g.view_mut((0, r), (r, m)).copy_from(&self.b);
        g.view_mut((r, 0), (p, r)).copy_from(&self.c);
        g.view_mut((r, r), (p, m)).copy_from(&self.d);
        g
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }

    pub fn step_width(&self) -> Option<f64> {
        match self.time_domain {
            TimeDomain::Discrete { step_width } => Some(step_width),
            TimeDomain::Continuous => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.time_domain, TimeDomain::Discrete { .. })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.a)
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: StateSpaceModel,
    /// Number of singular values inverted in the pseudoinverse.
    pub rank: usize,
    /// The regressor matrix has fewer independent columns than rows, so the
    /// returned blocks are the minimum-norm member of a solution family.
    pub underdetermined: bool,
    /// `‖targets − fit·regressors‖_F / ‖targets‖_F` (zero for zero targets).
    pub relative_residual: f64,
    /// Retained left singular vectors of `X₀`; only set by [`fit_dmd`], whose
    /// operator acts on coefficients in this basis.
    pub basis: Option<Matrix>,
}

fn relative_residual(targets: &Matrix, g: &Matrix, regressors: &Matrix) -> f64 {
    let tn = targets.norm();
    if tn == 0.0 {
        return 0.0;
    }
    (targets - g * regressors).norm() / tn
}

fn discrete(pairs: &SnapshotPairs) -> TimeDomain {
    TimeDomain::Discrete {
        step_width: pairs.step_width(),
    }
}

/// Plain DMD: `A = Uᵀ·X₁·V·Σ⁻¹` on the retained singular triplets of `X₀`.
///
/// The model order equals the number of retained singular values; the basis
/// `U` is returned in [`Fit::basis`] so modes can be lifted back to the full
/// state space.
pub fn fit_dmd(pairs: &SnapshotPairs, tol: &Tolerances) -> Result<Fit> {
    if pairs.is_empty() || pairs.state_dim() == 0 {
        return Err(Error::invalid("plain DMD needs nonempty state snapshots"));
    }
    tol.validate()?;
    linalg::ensure_finite(pairs.x0(), "state snapshots")?;
    linalg::ensure_finite(pairs.x1(), "successor snapshots")?;
    let (u, s, v) = linalg::sorted_svd(pairs.x0(), true)?;
    let v = v.expect("right vectors requested");
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let eps = tol.cutoff(sigma_max);
    let floor = (pairs.state_dim().max(pairs.len()) as f64) * f64::EPSILON * sigma_max;
    let r = s.iter().take_while(|&&x| x >= eps && x > floor).count();
    if r == 0 {
        return Err(Error::DegenerateData("every singular value of the state snapshots was truncated".into()));
    }
    let u = u.columns(0, r).into_owned();
    let mut xv = pairs.x1() * v.columns(0, r);
    for (j, sj) in s[..r].iter().enumerate() {
        xv.column_mut(j).unscale_mut(*sj);
    }
    let a = u.transpose() * xv;
    let residual = {
        let x1n = pairs.x1().norm();
        if x1n == 0.0 {
            0.0
        } else {
            (pairs.x1() - &u * &a * u.transpose() * pairs.x0()).norm() / x1n
        }
    };
    let model = StateSpaceModel::new(a, Matrix::zeros(r, 0), Matrix::zeros(0, r), Matrix::zeros(0, 0), discrete(pairs))?;
    Ok(Fit {
        model,
        rank: r,
        underdetermined: r < pairs.state_dim(),
        relative_residual: residual,
        basis: Some(u),
    })
}

/// DMD with control: `[A B] = X₁·[X₀; U₀]⁺`.
pub fn fit_dmdc(pairs: &SnapshotPairs, tol: &Tolerances) -> Result<Fit> {
    if !pairs.has_inputs() {
        return Err(Error::invalid("DMD with control needs input snapshots"));
    }
    let n = pairs.state_dim();
    let z = pairs.stacked_regressors();
    let (g, rank) = pinv_solve(&z, tol, pairs.x1())?;
    let m = pairs.input_dim();
    let model = StateSpaceModel::new(
        g.columns(0, n).into_owned(),
        g.columns(n, m).into_owned(),
        Matrix::zeros(0, n),
        Matrix::zeros(0, m),
        discrete(pairs),
    )?;
    Ok(Fit {
        model,
        rank,
        underdetermined: rank < z.nrows(),
        relative_residual: relative_residual(pairs.x1(), &g, &z),
        basis: None,
    })
}

/// Input-output DMD: all four blocks from one pseudoinverse solve.
pub fn fit_iodmd(pairs: &SnapshotPairs, tol: &Tolerances) -> Result<Fit> {
    if !pairs.has_inputs() {
        return Err(Error::invalid("ioDMD needs input snapshots"));
    }
    if !pairs.has_outputs() {
        return Err(Error::invalid("ioDMD needs output snapshots"));
    }
    let z = pairs.stacked_regressors();
    let w = pairs.stacked_targets();
    let (g, rank) = pinv_solve(&z, tol, &w)?;
    let model = StateSpaceModel::from_blocks(&g, pairs.state_dim(), discrete(pairs))?;
    Ok(Fit {
        model,
        rank,
        underdetermined: rank < z.nrows(),
        relative_residual: relative_residual(&w, &g, &z),
        basis: None,
    })
}

/// ioDMD on the projected pairs `(Qᵀ·X₀, Qᵀ·X₁, U₀, Y₀)`; the model order is
/// the column count of `q`.
pub fn fit_projected_iodmd(pairs: &SnapshotPairs, q: &Matrix, tol: &Tolerances) -> Result<Fit> {
    if q.ncols() == 0 {
        return Err(Error::invalid("projection basis has no columns"));
    }
    if q.nrows() != pairs.state_dim() {
        return Err(Error::mismatch("projection basis rows", pairs.state_dim(), q.nrows()));
    }
    tol.validate()?;
    let defect = (q.transpose() * q - Matrix::identity(q.ncols(), q.ncols())).amax();
    if !(defect <= tol.orthonormality_tol * q.nrows() as f64) {
        return Err(Error::invalid("projection basis columns are not orthonormal"));
    }
    fit_iodmd(&pairs.project(q)?, tol)
}

/// Reduced ioDMD through the modes of a POD basis.
pub fn fit_reduced_iodmd(pairs: &SnapshotPairs, basis: &PodBasis, tol: &Tolerances) -> Result<Fit> {
    fit_projected_iodmd(pairs, basis.modes(), tol)
}

/// Eigen-decomposition `A·V = V·Λ` of a model's state matrix.
#[derive(Debug, Clone)]
pub struct DmdModes {
    pub eigenvalues: Vec<Complex>,
    /// Column `i` is the unit-norm eigenvector for `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex>,
}

pub fn dmd_modes(model: &StateSpaceModel) -> Result<DmdModes> {
    let a = model.a();
    let eigenvalues = linalg::eigenvalues(a)?;
    let r = a.nrows();
    let mut eigenvectors = DMatrix::<Complex>::zeros(r, r);
    for (i, lambda) in eigenvalues.iter().enumerate() {
        eigenvectors.set_column(i, &linalg::eigenvector(a, *lambda)?);
    }
    Ok(DmdModes { eigenvalues, eigenvectors })
}

/// First-order (explicit Euler) continuous-time model:
/// `Â = (A − I)/h`, `B̂ = B/h`, `Ĉ = C`, `D̂ = D`.
pub fn to_continuous(model: &StateSpaceModel, h: f64) -> Result<StateSpaceModel> {
    if !model.is_discrete() {
        return Err(Error::invalid("model is already continuous-time"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("conversion step must be positive"));
    }
    let r = model.order();
    StateSpaceModel::new(
        (model.a() - Matrix::identity(r, r)) / h,
        model.b() / h,
        model.c().clone(),
        model.d().clone(),
        TimeDomain::Continuous,
    )
}

/// Explicit Euler discretization `A = I + h·Â`, `B = h·B̂`; inverse of
/// [`to_continuous`].
pub fn euler_discretize(model: &StateSpaceModel, h: f64) -> Result<StateSpaceModel> {
    if model.is_discrete() {
        return Err(Error::invalid("model is already discrete-time"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("discretization step must be positive"));
    }
    let r = model.order();
    StateSpaceModel::new(
        Matrix::identity(r, r) + model.a() * h,
        model.b() * h,
        model.c().clone(),
        model.d().clone(),
        TimeDomain::Discrete { step_width: h },
    )
}

/// Residual `[X₁; Y₀] − [A B; C D]·[X₀; U₀]` of a model on pairs.
pub fn data_residual(model: &StateSpaceModel, pairs: &SnapshotPairs) -> Result<Matrix> {
    if pairs.state_dim() != model.order() {
        return Err(Error::mismatch("snapshot state dimension", model.order(), pairs.state_dim()));
    }
    if pairs.input_dim() != model.inputs() {
        return Err(Error::mismatch("snapshot input dimension", model.inputs(), pairs.input_dim()));
    }
    if pairs.output_dim() != model.outputs() {
        return Err(Error::mismatch("snapshot output dimension", model.outputs(), pairs.output_dim()));
    }
    let z = stack_rows(pairs.x0(), pairs.u0());
    let w = stack_rows(pairs.x1(), pairs.y0());
    Ok(w - model.block_matrix() * z)
}
