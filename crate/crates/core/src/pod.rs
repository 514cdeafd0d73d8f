//! Proper orthogonal decomposition: truncated left singular bases of a
//! snapshot matrix, sized by a projection-error budget.
//!
//! For a basis of the first `n` left singular vectors the projection error is
//! exactly the tail energy, `‖X − QQᵀX‖_F = (Σ_{i>n} σ_i²)^{1/2}`.

use alloc::vec::Vec;

use crate::linalg::{ensure_finite, sorted_svd};
use crate::{Error, Matrix, Result};

/// How a projection-error budget is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionError {
    /// Budget times `‖X‖_F`.
    #[default]
    Relative,
    /// Budget as an absolute Frobenius norm.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PodOptions {
    pub mode: ProjectionError,
    /// Measure the error as a root-mean-square over snapshots, i.e. scale an
    /// absolute budget by `sqrt(snapshot count)`. Has no effect on relative
    /// budgets, where the factor cancels.
    pub per_snapshot: bool,
}

impl PodOptions {
    pub fn absolute() -> Self {
        Self {
            mode: ProjectionError::Absolute,
            per_snapshot: false,
        }
    }
}

/// Truncated POD basis.
#[derive(Debug, Clone)]
pub struct PodBasis {
    modes: Matrix,
    retained_singular_values: Vec<f64>,
    discarded_energy: f64,
    requested_error: f64,
    threshold: f64,
}

impl PodBasis {
    /// `N×n` orthonormal columns.
    pub fn modes(&self) -> &Matrix {
        &self.modes
    }

    pub fn order(&self) -> usize {
        self.modes.ncols()
    }

    pub fn retained_singular_values(&self) -> &[f64] {
        &self.retained_singular_values
    }

    /// `(Σ_{i>n} σ_i²)^{1/2}`.
    pub fn discarded_energy(&self) -> f64 {
        self.discarded_energy
    }

    /// The budget as requested by the caller.
    pub fn requested_error(&self) -> f64 {
        self.requested_error
    }

    /// The budget converted to an absolute Frobenius bound.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Singular spectrum of a snapshot matrix, computed once and reused to cut
/// bases for several budgets.
#[derive(Debug, Clone)]
pub struct PodSpectrum {
    left: Matrix,
    singular_values: Vec<f64>,
    /// `tails[n] = (Σ_{i≥n} σ_i²)^{1/2}`, length `k + 1`.
    tails: Vec<f64>,
    frobenius: f64,
    snapshots: usize,
    numerical_rank: usize,
}

impl PodSpectrum {
    pub fn new(x: &Matrix) -> Result<Self> {
        ensure_finite(x, "snapshot matrix")?;
        let frobenius = x.norm();
        if frobenius == 0.0 {
            return Err(Error::DegenerateData("POD of a zero snapshot matrix".into()));
        }
        let (mut left, singular_values, _) = sorted_svd(x, false)?;
        for mut col in left.column_iter_mut() {
            let pivot = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        let k = singular_values.len();
        let mut tails = alloc::vec![0.0; k + 1];
        let mut acc = 0.0;
        for i in (0..k).rev() {
            acc += singular_values[i] * singular_values[i];
            tails[i] = libm::sqrt(acc);
        }
        let floor = (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * singular_values[0];
        let numerical_rank = singular_values.iter().take_while(|&&s| s > floor).count().max(1);
        Ok(Self {
            left,
            singular_values,
            tails,
            frobenius,
            snapshots: x.ncols(),
            numerical_rank,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    /// Projection error of the first `n` modes.
    pub fn tail_energy(&self, n: usize) -> f64 {
        self.tails[n.min(self.singular_values.len())]
    }

    pub fn threshold(&self, budget: f64, opts: PodOptions) -> f64 {
        match opts.mode {
            ProjectionError::Relative => budget * self.frobenius,
            ProjectionError::Absolute if opts.per_snapshot => budget * libm::sqrt(self.snapshots as f64),
            ProjectionError::Absolute => budget,
        }
    }

    /// Smallest `n ≥ 1` whose tail energy meets the budget, capped at the
    /// numerical rank.
    pub fn order_for(&self, budget: f64, opts: PodOptions) -> Result<usize> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::invalid("projection error budget must be finite and nonnegative"));
        }
        let threshold = self.threshold(budget, opts);
        Ok((1..=self.numerical_rank)
            .find(|&n| self.tails[n] <= threshold)
            .unwrap_or(self.numerical_rank))
    }

    pub fn basis(&self, budget: f64, opts: PodOptions) -> Result<PodBasis> {
        let n = self.order_for(budget, opts)?;
        let mut b = self.basis_of_order(n)?;
        b.requested_error = budget;
        b.threshold = self.threshold(budget, opts);
        Ok(b)
    }

    /// The first `n` modes regardless of any budget.
    pub fn basis_of_order(&self, n: usize) -> Result<PodBasis> {
        if n == 0 || n > self.singular_values.len() {
            return Err(Error::invalid("POD order must lie between 1 and the snapshot rank"));
        }
        Ok(PodBasis {
            modes: self.left.columns(0, n).into_owned(),
            retained_singular_values: self.singular_values[..n].to_vec(),
            discarded_energy: self.tails[n],
            requested_error: self.tails[n],
            threshold: self.tails[n],
        })
    }
}

/// POD basis of `x` with the fewest modes whose projection error stays within
/// the budget.
pub fn pod_basis(x: &Matrix, budget: f64, opts: PodOptions) -> Result<PodBasis> {
    PodSpectrum::new(x)?.basis(budget, opts)
}
