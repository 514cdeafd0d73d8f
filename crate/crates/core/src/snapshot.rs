//! Trajectory data and the shifted snapshot matrices the fits consume.

use alloc::string::String;

use crate::{Error, Matrix, Result};

/// Uniformly sampled input, state and output history of one simulation.
///
/// Column `k` of every matrix is the sample at `t_k = k·step_width`. Absent
/// inputs or outputs are represented by matrices with zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    states: Matrix,
    inputs: Matrix,
    outputs: Matrix,
    step_width: f64,
    pub label: String,
}

impl TrajectoryData {
    pub fn new(states: Matrix, inputs: Matrix, outputs: Matrix, step_width: f64) -> Result<Self> {
        if !(step_width.is_finite() && step_width > 0.0) {
            return Err(Error::invalid("step width must be positive"));
        }
        let samples = states.ncols();
        for (what, m) in [("input samples", &inputs), ("output samples", &outputs)] {
            if m.nrows() > 0 && m.ncols() != samples {
                return Err(Error::mismatch(what, samples, m.ncols()));
            }
        }
        let fix = |m: Matrix| if m.nrows() == 0 { Matrix::zeros(0, samples) } else { m };
        Ok(Self {
            states,
            inputs: fix(inputs),
            outputs: fix(outputs),
            step_width,
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn outputs(&self) -> &Matrix {
        &self.outputs
    }

    pub fn step_width(&self) -> f64 {
        self.step_width
    }

    /// Number of samples `K + 1`.
    pub fn samples(&self) -> usize {
        self.states.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.nrows()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step_width
    }
}

/// Aligned snapshot matrices: column `k` of `x1` is the successor of column
/// `k` of `x0`, driven by column `k` of `u0` and observed as column `k` of `y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPairs {
    x0: Matrix,
    x1: Matrix,
    u0: Matrix,
    y0: Matrix,
    step_width: f64,
}

impl SnapshotPairs {
    /// Builds pairs from explicit matrices; `u0`/`y0` may have zero rows.
    pub fn new(x0: Matrix, x1: Matrix, u0: Matrix, y0: Matrix) -> Result<Self> {
        if x0.nrows() != x1.nrows() {
            return Err(Error::mismatch("successor snapshot rows", x0.nrows(), x1.nrows()));
        }
        if x0.ncols() != x1.ncols() {
            return Err(Error::mismatch("successor snapshot columns", x0.ncols(), x1.ncols()));
        }
        let k = x0.ncols();
        for (what, m) in [("input snapshot columns", &u0), ("output snapshot columns", &y0)] {
            if m.nrows() > 0 && m.ncols() != k {
                return Err(Error::mismatch(what, k, m.ncols()));
            }
        }
        let fix = |m: Matrix| if m.nrows() == 0 { Matrix::zeros(0, k) } else { m };
        Ok(Self {
            x0,
            x1,
            u0: fix(u0),
            y0: fix(y0),
            step_width: 1.0,
        })
    }

    /// Sampling interval recorded on models fitted to these pairs.
    pub fn with_step_width(mut self, step_width: f64) -> Result<Self> {
        if !(step_width.is_finite() && step_width > 0.0) {
            return Err(Error::invalid("step width must be positive"));
        }
        self.step_width = step_width;
        Ok(self)
    }

    pub fn step_width(&self) -> f64 {
        self.step_width
    }

    pub fn x0(&self) -> &Matrix {
        &self.x0
    }

    pub fn x1(&self) -> &Matrix {
        &self.x1
    }

    pub fn u0(&self) -> &Matrix {
        &self.u0
    }

    pub fn y0(&self) -> &Matrix {
        &self.y0
    }

    /// Number of pairs `K`.
    pub fn len(&self) -> usize {
        self.x0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x0.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u0.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.y0.nrows()
    }

    pub fn has_inputs(&self) -> bool {
        self.u0.nrows() > 0
    }

    pub fn has_outputs(&self) -> bool {
        self.y0.nrows() > 0
    }

    /// `[X₀; U₀]`.
    pub fn stacked_regressors(&self) -> Matrix {
        stack_rows(&self.x0, &self.u0)
    }

    /// `[X₁; Y₀]`.
    pub fn stacked_targets(&self) -> Matrix {
        stack_rows(&self.x1, &self.y0)
    }

    /// Same pairs with the state snapshots replaced by `Qᵀ·X`.
    pub fn project(&self, basis: &Matrix) -> Result<Self> {
        if basis.nrows() != self.state_dim() {
            return Err(Error::mismatch("projection basis rows", self.state_dim(), basis.nrows()));
        }
        let qt = basis.transpose();
        Ok(Self {
            x0: &qt * &self.x0,
            x1: &qt * &self.x1,
            u0: self.u0.clone(),
            y0: self.y0.clone(),
            step_width: self.step_width,
        })
    }
}

pub(crate) fn stack_rows(top: &Matrix, bottom: &Matrix) -> Matrix {
    let cols = top.ncols();
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), cols);
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Shifted partitions of one trajectory: every column but the last pairs with
/// its successor. Inputs and outputs drop their last sample.
pub fn make_pairs(traj: &TrajectoryData) -> Result<SnapshotPairs> {
    let samples = traj.samples();
    if samples < 2 {
        return Err(Error::invalid("at least two snapshots are required to form pairs"));
    }
    let k = samples - 1;
    SnapshotPairs::new(
        traj.states.columns(0, k).into_owned(),
        traj.states.columns(1, k).into_owned(),
        traj.inputs.columns(0, k).into_owned(),
        traj.outputs.columns(0, k).into_owned(),
    )?
    .with_step_width(traj.step_width)
}

/// Column-wise concatenation of several pair sets, in order. The result
/// carries the step width of the first part.
pub fn concat_pairs(parts: &[SnapshotPairs]) -> Result<SnapshotPairs> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("cannot concatenate an empty list of snapshot pairs"))?;
    let (n, m, q) = (first.state_dim(), first.input_dim(), first.output_dim());
    for p in &parts[1..] {
        if p.state_dim() != n {
            return Err(Error::mismatch("concatenated state dimension", n, p.state_dim()));
        }
        if p.input_dim() != m {
            return Err(Error::mismatch("concatenated input dimension", m, p.input_dim()));
        }
        if p.output_dim() != q {
            return Err(Error::mismatch("concatenated output dimension", q, p.output_dim()));
        }
    }
    let total: usize = parts.iter().map(SnapshotPairs::len).sum();
    let mut x0 = Matrix::zeros(n, total);
    let mut x1 = Matrix::zeros(n, total);
    let mut u0 = Matrix::zeros(m, total);
    let mut y0 = Matrix::zeros(q, total);
    let mut at = 0;
    for p in parts {
        let k = p.len();
        x0.columns_mut(at, k).copy_from(&p.x0);
        x1.columns_mut(at, k).copy_from(&p.x1);
        u0.columns_mut(at, k).copy_from(&p.u0);
        y0.columns_mut(at, k).copy_from(&p.y0);
        at += k;
    }
    SnapshotPairs::new(x0, x1, u0, y0)?.with_step_width(first.step_width)
}
