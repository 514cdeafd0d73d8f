//! Dense numerical kernels: truncated SVD, pseudoinverse application,
//! eigenvalues and eigenvectors of real matrices, and the spectral radius
//! together with its gradient.
//!
//! All kernels take real matrices; complex arithmetic only appears inside the
//! eigenvalue routines.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};

use crate::{Complex, Error, Matrix, Result};

type CMatrix = DMatrix<Complex>;
type CVector = DVector<Complex>;

/// Modulus ties closer than this (relative to `max(rho, 1)`) are treated as
/// a single non-smooth maximizer of the spectral radius.
const MODULUS_TIE_TOL: f64 = 1e-10;

/// Numerical thresholds shared by the identification routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Singular values below this cutoff are discarded before inversion.
    pub svd_truncation_eps: f64,
    /// Interpret `svd_truncation_eps` relative to the largest singular value.
    pub relative_truncation: bool,
    /// Allowed deviation of `QᵀQ` from the identity, scaled by the row count.
    pub orthonormality_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            svd_truncation_eps: 0.0,
            relative_truncation: false,
            orthonormality_tol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            svd_truncation_eps: eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.svd_truncation_eps) || !ok(self.orthonormality_tol) {
            return Err(Error::invalid("tolerances must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Absolute singular-value cutoff for a matrix whose largest singular
    /// value is `sigma_max`.
    pub fn cutoff(&self, sigma_max: f64) -> f64 {
        if self.relative_truncation {
            self.svd_truncation_eps * sigma_max
        } else {
            self.svd_truncation_eps
        }
    }
}

/// Thin singular value decomposition restricted to the retained triplets.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `N×r` with orthonormal columns.
    pub left_vectors: Matrix,
    /// Nonincreasing, nonnegative, length `r`.
    pub singular_values: Vec<f64>,
    /// `K×r` with orthonormal columns.
    pub right_vectors: Matrix,
    /// Number of triplets dropped by the cutoff.
    pub discarded_count: usize,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U·diag(σ)·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.left_vectors.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.right_vectors.transpose()
    }
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// Full thin SVD with singular values sorted nonincreasingly.
///
/// Returns `(U, σ, V)` where `U` is `N×k`, `V` is `K×k`, `k = min(N, K)`.
pub(crate) fn sorted_svd(m: &Matrix, want_v: bool) -> Result<(Matrix, Vec<f64>, Option<Matrix>)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((
            Matrix::zeros(rows, 0),
            Vec::new(),
            want_v.then(|| Matrix::zeros(cols, 0)),
        ));
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, want_v, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.expect("left vectors requested");
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let mut u_sorted = Matrix::zeros(rows, k);
    let mut s_sorted = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        s_sorted.push(sigma[src].max(0.0));
    }
    let v_sorted = svd.v_t.map(|vt| {
        let mut v = Matrix::zeros(cols, k);
        for (dst, &src) in order.iter().enumerate() {
            v.set_column(dst, &vt.row(src).transpose());
        }
        v
    });
    Ok((u_sorted, s_sorted, v_sorted))
}

/// SVD of `m` keeping only the triplets with `σ_i ≥ eps`.
pub fn truncated_svd(m: &Matrix, eps: f64) -> Result<SvdResult> {
    ensure_finite(m, "matrix")?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::invalid("truncation threshold must be finite and nonnegative"));
    }
    let (u, s, v) = sorted_svd(m, true)?;
    let v = v.expect("right vectors requested");
    let keep = s.iter().take_while(|&&x| x >= eps).count();
    Ok(SvdResult {
        left_vectors: u.columns(0, keep).into_owned(),
        singular_values: s[..keep].to_vec(),
        right_vectors: v.columns(0, keep).into_owned(),
        discarded_count: s.len() - keep,
    })
}

/// Solution of `G·M ≈ RHS` through the truncated pseudoinverse, plus the
/// number of singular values actually inverted.
pub(crate) fn pinv_solve(m: &Matrix, cutoff: &Tolerances, rhs: &Matrix) -> Result<(Matrix, usize)> {
    ensure_finite(m, "matrix")?;
    ensure_finite(rhs, "right-hand side")?;
    cutoff.validate()?;
    if rhs.ncols() != m.ncols() {
        return Err(Error::mismatch("pseudoinverse right-hand side columns", m.ncols(), rhs.ncols()));
    }
    let (u, s, v) = sorted_svd(m, true)?;
    let v = v.expect("right vectors requested");
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let eps = cutoff.cutoff(sigma_max);
    // Singular values at rounding level are numerically zero even when no
    // explicit truncation is requested.
    let floor = (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * sigma_max;
    let rank = s.iter().take_while(|&&x| x >= eps && x > floor).count();

    let mut rv = rhs * v.columns(0, rank);
    for (j, sj) in s[..rank].iter().enumerate() {
        rv.column_mut(j).unscale_mut(*sj);
    }
    Ok((rv * u.columns(0, rank).transpose(), rank))
}

/// `RHS·M⁺` with `M⁺` the pseudoinverse built from singular values `≥ eps`.
pub fn pinv_apply(m: &Matrix, eps: f64, rhs: &Matrix) -> Result<Matrix> {
    pinv_solve(m, &Tolerances::with_eps(eps), rhs).map(|(g, _)| g)
}

/// All eigenvalues of a real square matrix (via the real Schur form).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex>> {
    if !a.is_square() {
        return Err(Error::mismatch("eigenvalue problem (square matrix)", a.nrows(), a.ncols()));
    }
    ensure_finite(a, "matrix")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub(crate) fn modulus(z: Complex) -> f64 {
    libm::hypot(z.re, z.im)
}

/// `max |λ|` over the spectrum of `a`; zero for an empty matrix.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.into_iter().map(modulus).fold(0.0, f64::max))
}

fn complexify(a: &Matrix) -> CMatrix {
    a.map(|v| Complex::new(v, 0.0))
}

fn normalize_phase(v: &mut CVector) -> bool {
    let mut best = 0;
    let mut best_mod = 0.0;
    for (i, z) in v.iter().enumerate() {
        let m = modulus(*z);
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    if !(best_mod.is_finite() && best_mod > 0.0) {
        return false;
    }
    let pivot = v[best];
    v.iter_mut().for_each(|z| *z /= pivot);
    let norm = libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum::<f64>());
    v.iter_mut().for_each(|z| *z /= Complex::new(norm, 0.0));
    true
}

/// Shifted inverse iteration for the eigenvector of `m` belonging to the
/// (already computed) eigenvalue `lambda`.
fn inverse_iteration(m: &CMatrix, lambda: Complex) -> Result<CVector> {
    let n = m.nrows();
    let scale = libm::sqrt(m.iter().map(|z| z.norm_sqr()).sum::<f64>()).max(f64::MIN_POSITIVE);
    let mut offset = 1e-13 * scale;
    for _ in 0..6 {
        let mut shifted = m.clone();
        let sigma = lambda + Complex::new(offset, 0.0);
        for i in 0..n {
            shifted[(i, i)] -= sigma;
        }
        let lu = shifted.lu();
        let mut v = CVector::from_fn(n, |i, _| Complex::new(1.0 + (i as f64) / (n as f64 + 1.0), 0.0));
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(w) => v = w,
                None => {
                    ok = false;
                    break;
                }
            }
            if !normalize_phase(&mut v) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(v);
        }
        offset *= 1e3;
    }
    Err(Error::Numeric("inverse iteration failed to produce an eigenvector".into()))
}

/// Unit-norm right eigenvector `x` with `A·x = λ·x`, phase-normalized so that
/// its largest-modulus component is real and positive.
pub fn eigenvector(a: &Matrix, lambda: Complex) -> Result<DVector<Complex>> {
    if !a.is_square() {
        return Err(Error::mismatch("eigenvector (square matrix)", a.nrows(), a.ncols()));
    }
    inverse_iteration(&complexify(a), lambda)
}

/// Spectral radius, the selected dominant eigenvalue and the gradient of the
/// spectral radius with respect to the matrix entries.
#[derive(Debug, Clone)]
pub struct RadiusGradient {
    pub radius: f64,
    pub eigenvalue: Complex,
    pub gradient: Matrix,
    /// More than one eigenvalue (other than a conjugate partner) attains the
    /// maximal modulus; the gradient is then one element of a family.
    pub nonsmooth: bool,
}

/// Index of the dominant eigenvalue and whether the maximizer is a tie.
///
/// Among eigenvalues of (numerically) maximal modulus the one with the largest
/// real part wins, then the one with the largest imaginary part.
pub(crate) fn select_dominant(eigs: &[Complex]) -> (usize, bool) {
    let rho = eigs.iter().copied().map(modulus).fold(0.0, f64::max);
    let tol = MODULUS_TIE_TOL * rho.max(1.0);
    let mut tied: Vec<usize> = (0..eigs.len()).filter(|&i| modulus(eigs[i]) >= rho - tol).collect();
    let chosen = *tied
        .iter()
        .max_by(|&&i, &&j| {
            eigs[i]
                .re
                .total_cmp(&eigs[j].re)
                .then(eigs[i].im.total_cmp(&eigs[j].im))
                .then(j.cmp(&i))
        })
        .expect("nonempty spectrum");
    tied.retain(|&i| i != chosen);
    let lam = eigs[chosen];
    if lam.im.abs() > tol {
        let partner = tied
            .iter()
            .copied()
            .min_by(|&i, &j| modulus(eigs[i] - lam.conj()).total_cmp(&modulus(eigs[j] - lam.conj())));
        if let Some(p) = partner {
            if modulus(eigs[p] - lam.conj()) <= tol {
                tied.retain(|&i| i != p);
            }
        }
    }
    (chosen, !tied.is_empty())
}

/// Gradient of `ρ(A)` by first-order eigenvalue perturbation.
///
/// With right eigenvector `x` and a left eigenvector `w` (`wᵀA = λwᵀ`) of the
/// dominant eigenvalue, `∂ρ/∂A = Re(conj(λ)/|λ| · w·xᵀ / (wᵀx))`.
pub fn spectral_radius_gradient(a: &Matrix) -> Result<RadiusGradient> {
    let eigs = eigenvalues(a)?;
    if eigs.is_empty() {
        return Err(Error::invalid("spectral radius gradient of an empty matrix"));
    }
    let (idx, nonsmooth) = select_dominant(&eigs);
    let lambda = eigs[idx];
    let radius = modulus(lambda);
    if radius == 0.0 {
        return Err(Error::Numeric("spectral radius is zero; gradient undefined".into()));
    }
    let ca = complexify(a);
    let x = inverse_iteration(&ca, lambda)?;
    let w = inverse_iteration(&ca.transpose(), lambda)?;
    let denom = w.iter().zip(x.iter()).map(|(wi, xi)| wi * xi).sum::<Complex>();
    if !(modulus(denom) > 1e-14) {
        return Err(Error::Numeric("dominant eigenvalue is defective; gradient undefined".into()));
    }
    let phase = lambda.conj() / Complex::new(radius, 0.0) / denom;
    let n = a.nrows();
    let gradient = Matrix::from_fn(n, n, |i, j| (phase * w[i] * x[j]).re);
    Ok(RadiusGradient {
        radius,
        eigenvalue: lambda,
        gradient,
        nonsmooth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
    }

    #[test]
    fn identity_svd_keeps_everything() {
        let r = truncated_svd(&Matrix::identity(3, 3), 0.0).unwrap();
        assert_eq!(r.singular_values, [1.0, 1.0, 1.0]);
        assert_eq!(r.discarded_count, 0);
    }

    #[test]
    fn threshold_cuts_small_singular_value() {
        let m = Matrix::from_diagonal(&DVector::from_vec(alloc::vec![2.0, 1e-6]));
        let r = truncated_svd(&m, 1e-5).unwrap();
        assert_eq!(r.singular_values.len(), 1);
        assert!((r.singular_values[0] - 2.0).abs() < 1e-15);
        assert_eq!(r.discarded_count, 1);
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let m = random(6, 4, 3);
        let r = truncated_svd(&m, 0.0).unwrap();
        // Oracle: multiply the factors back.
        let rebuilt = &r.left_vectors * Matrix::from_diagonal(&DVector::from_vec(r.singular_values.clone())) * r.right_vectors.transpose();
        for (x, y) in m.iter().zip(rebuilt.iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let gram = r.left_vectors.transpose() * &r.left_vectors;
        assert!((gram - Matrix::identity(4, 4)).amax() < 1e-12 * 6.0);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&m, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pinv_of_identity_and_rank_one_diagonal() {
        let rhs = random(3, 2, 9);
        let g = pinv_apply(&Matrix::identity(2, 2), 0.0, &rhs).unwrap();
        assert!((g - &rhs).amax() < 1e-15);

        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let g = pinv_apply(&m, 0.0, &Matrix::from_row_slice(1, 2, &[4.0, 0.0])).unwrap();
        assert_eq!(g.shape(), (1, 2));
        assert!((g[(0, 0)] - 2.0).abs() < 1e-15 && g[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn pinv_matches_normal_equations() {
        let m = random(3, 20, 5);
        let rhs = random(2, 20, 6);
        let g = pinv_apply(&m, 0.0, &rhs).unwrap();
        let gram = &m * m.transpose();
        let oracle = &rhs * m.transpose() * gram.try_inverse().unwrap();
        assert!((g - oracle).amax() < 1e-10);
    }

    #[test]
    fn pinv_dimension_mismatch() {
        let e = pinv_apply(&Matrix::identity(2, 3), 0.0, &Matrix::zeros(1, 2));
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn radius_of_simple_matrices() {
        let d = Matrix::from_diagonal(&DVector::from_vec(alloc::vec![0.5, -0.25]));
        assert!((spectral_radius(&d).unwrap() - 0.5).abs() < 1e-15);
        let rot = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_diagonal() {
        let a = Matrix::from_diagonal(&DVector::from_vec(alloc::vec![0.9, 0.1]));
        let g = spectral_radius_gradient(&a).unwrap();
        assert!(!g.nonsmooth);
        let expected = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((g.gradient - expected).amax() < 1e-12);
    }

    #[test]
    fn gradient_at_tie_is_flagged() {
        let g = spectral_radius_gradient(&(Matrix::identity(2, 2) * 0.5)).unwrap();
        assert!(g.nonsmooth);
        assert!((g.radius - 0.5).abs() < 1e-15);
        assert!(g.gradient.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn conjugate_pair_is_not_a_tie() {
        let rot = Matrix::from_row_slice(2, 2, &[0.0, 0.9, -0.9, 0.0]);
        let g = spectral_radius_gradient(&rot).unwrap();
        assert!(!g.nonsmooth);
        assert!(g.eigenvalue.im > 0.0);
    }

    #[test]
    fn zero_matrix_gradient_is_an_error() {
        assert!(matches!(spectral_radius_gradient(&Matrix::zeros(2, 2)), Err(Error::Numeric(_))));
    }

    #[test]
    fn tie_break_prefers_largest_real_part() {
        let eigs = [Complex::new(-0.5, 0.0), Complex::new(0.5, 0.0), Complex::new(0.0, 0.5)];
        let (idx, tie) = select_dominant(&eigs);
        assert_eq!(idx, 1);
        assert!(tie);
    }

    #[test]
    fn tolerances_relative_cutoff() {
        let t = Tolerances {
            relative_truncation: true,
            ..Tolerances::with_eps(1e-3)
        };
        assert_eq!(t.cutoff(10.0), 1e-2);
        assert!(Tolerances::with_eps(-1.0).validate().is_err());
    }
}
