#![allow(dead_code)]

use iodmd_core::excite::GaussianStream;
use iodmd_core::identify::TimeDomain;
use iodmd_core::linalg::spectral_radius;
use iodmd_core::{Matrix, StateSpaceModel, Vector};

pub fn gaussian(rows: usize, cols: usize, g: &mut GaussianStream) -> Matrix {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = g.next_normal();
        }
    }
    m
}

pub fn gaussian_vector(n: usize, g: &mut GaussianStream) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| g.next_normal()))
}

/// Random discrete model with `ρ(A) = radius`.
pub fn random_stable_model(n: usize, m: usize, q: usize, radius: f64, g: &mut GaussianStream) -> StateSpaceModel {
    let a = gaussian(n, n, g);
    let a = &a * (radius / spectral_radius(&a).unwrap());
    StateSpaceModel::new(a, gaussian(n, m, g), gaussian(q, n, g), gaussian(q, m, g), TimeDomain::Discrete { step_width: 1.0 }).unwrap()
}

pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
