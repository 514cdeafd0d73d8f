//! Quasi-Newton building blocks for nonsmooth objectives: BFGS inverse
//! Hessian approximations (dense or limited-memory) and a weak Wolfe line
//! search.

use alloc::collections::VecDeque;

use crate::{Matrix, Result, Vector};

/// Approximation `H ≈ ∇²φ⁻¹`.
pub(crate) enum InverseHessian {
    Full { h: Option<Matrix>, n: usize },
    Limited { history: VecDeque<(Vector, Vector, f64)>, capacity: usize, gamma: f64 },
}

impl InverseHessian {
    pub(crate) fn full(n: usize) -> Self {
        Self::Full { h: None, n }
    }

    pub(crate) fn limited(capacity: usize) -> Self {
        Self::Limited {
            history: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            gamma: 1.0,
        }
    }

    pub(crate) fn reset(&mut self) {
        match self {
            Self::Full { h, .. } => *h = None,
            Self::Limited { history, gamma, .. } => {
                history.clear();
                *gamma = 1.0;
            }
        }
    }

    /// `H·g`.
    pub(crate) fn apply(&self, g: &Vector) -> Vector {
        match self {
            Self::Full { h: None, .. } => g.clone(),
            Self::Full { h: Some(h), .. } => h * g,
            Self::Limited { history, gamma, .. } => {
                // Two-loop recursion.
                let mut q = g.clone();
                let mut alphas = alloc::vec::Vec::with_capacity(history.len());
                for (s, y, rho) in history.iter().rev() {
                    let alpha = rho * s.dot(&q);
                    q.axpy(-alpha, y, 1.0);
                    alphas.push(alpha);
                }
                q *= *gamma;
                for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
                    let beta = rho * y.dot(&q);
                    q.axpy(alpha - beta, s, 1.0);
                }
                q
            }
        }
    }

    /// BFGS update with step `s` and gradient change `y`; skipped (returning
    /// `false`) when the curvature condition `sᵀy > 0` fails.
    pub(crate) fn update(&mut self, s: &Vector, y: &Vector) -> bool {
        let sy = s.dot(y);
        let yy = y.dot(y);
        if !(sy > 1e-16 * s.norm() * y.norm()) || !(yy > 0.0) || !sy.is_finite() {
            return false;
        }
        let rho = 1.0 / sy;
        match self {
            Self::Full { h, n } => {
                let h = h.get_or_insert_with(|| Matrix::identity(*n, *n) * (sy / yy));
                // H⁺ = H − ρ(s·(Hy)ᵀ + Hy·sᵀ) + (ρ²·yᵀHy + ρ)·s·sᵀ
                let hy = &*h * y;
                let yhy = y.dot(&hy);
                h.ger(-rho, s, &hy, 1.0);
                h.ger(-rho, &hy, s, 1.0);
                h.ger(rho * rho * yhy + rho, s, s, 1.0);
            }
            Self::Limited { history, capacity, gamma } => {
                if history.len() == *capacity {
                    history.pop_front();
                }
                history.push_back((s.clone(), y.clone(), rho));
                *gamma = sy / yy;
            }
        }
        true
    }
}

/// Outcome of a line search along a descent direction.
pub(crate) enum LineSearch<T> {
    Accepted { point: T },
    /// No step satisfied both conditions; the current iterate is treated as
    /// (approximately) stationary.
    Failed,
}

pub(crate) struct WolfeParams {
    pub sufficient_decrease: f64,
    pub curvature: f64,
    pub max_evaluations: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            sufficient_decrease: 1e-4,
            curvature: 0.9,
            max_evaluations: 60,
        }
    }
}

/// Weak Wolfe bracketing/bisection search for functions that are only
/// differentiable almost everywhere.
///
/// Accepts `t` with `φ(t) ≤ φ(0) + c₁·t·φ'(0)` and `φ'(t) ≥ c₂·φ'(0)`.
/// `eval(t)` returns `(φ(t), φ'(t), payload)`.
pub(crate) fn weak_wolfe<T, F>(phi0: f64, slope0: f64, params: &WolfeParams, mut eval: F) -> Result<LineSearch<T>>
where
    F: FnMut(f64) -> Result<(f64, f64, T)>,
{
    debug_assert!(slope0 < 0.0);
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut t = 1.0;
    for _ in 0..params.max_evaluations {
        let (phi, slope, point) = eval(t)?;
        if !phi.is_finite() || phi > phi0 + params.sufficient_decrease * t * slope0 {
            hi = t;
        } else if !slope.is_finite() || slope < params.curvature * slope0 {
            lo = t;
        } else {
            return Ok(LineSearch::Accepted { point });
        }
        t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(LineSearch::Failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &Vector) -> (f64, Vector) {
        // f = ½xᵀDx with D = diag(1, 10, 100)
        let d = [1.0, 10.0, 100.0];
        let g = Vector::from_fn(3, |i, _| d[i] * x[i]);
        (0.5 * x.dot(&g), g)
    }

    fn minimize(mut h: InverseHessian) -> usize {
        let mut x = Vector::from_row_slice(&[1.0, 1.0, 1.0]);
        let (mut f, mut g) = quadratic(&x);
        for it in 0..200 {
            if g.norm() < 1e-10 {
                return it;
            }
            let d = -h.apply(&g);
            let slope = g.dot(&d);
            let res = weak_wolfe(f, slope, &WolfeParams::default(), |t| {
                let xt = &x + &d * t;
                let (ft, gt) = quadratic(&xt);
                Ok((ft, gt.dot(&d), (xt, ft, gt)))
            })
            .unwrap();
            match res {
                LineSearch::Accepted { point: (xn, fnew, gn), .. } => {
                    h.update(&(&xn - &x), &(&gn - &g));
                    x = xn;
                    f = fnew;
                    g = gn;
                }
                LineSearch::Failed => return it,
            }
        }
        200
    }

    #[test]
    fn full_bfgs_minimizes_quadratic() {
        assert!(minimize(InverseHessian::full(3)) < 30);
    }

    #[test]
    fn limited_bfgs_minimizes_quadratic() {
        assert!(minimize(InverseHessian::limited(2)) < 100);
    }

    #[test]
    fn line_search_on_kink_satisfies_wolfe_conditions() {
        // φ(t) = |t − 0.3| − 0.3 along slope −1; kink at 0.3.
        let res = weak_wolfe(0.0, -1.0, &WolfeParams::default(), |t| {
            let phi = (t - 0.3f64).abs() - 0.3;
            let slope = if t < 0.3 { -1.0 } else { 1.0 };
            Ok((phi, slope, t))
        })
        .unwrap();
        match res {
            LineSearch::Accepted { point } => assert!(point > 0.0 && point < 0.6),
            LineSearch::Failed => panic!("line search failed"),
        }
    }

    #[test]
    fn skipped_update_on_negative_curvature() {
        let mut h = InverseHessian::full(2);
        let s = Vector::from_row_slice(&[1.0, 0.0]);
        let y = Vector::from_row_slice(&[-1.0, 0.0]);
        assert!(!h.update(&s, &y));
        let g = Vector::from_row_slice(&[2.0, 3.0]);
        assert_eq!(h.apply(&g), g);
    }
}
