//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    /// Relative step size at which the iteration stops.
    pub step_tolerance: f64,
    /// Largest accepted cosine between the residual and any Jacobian column.
    pub gradient_tolerance: f64,
    /// Residual norm below which the fit counts as exact.
    pub residual_floor: f64,
    pub max_iterations: usize,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { step_tolerance: 1e-10, gradient_tolerance: 1e-6, residual_floor: 0.0, max_iterations: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct LsqOutcome {
    pub params: Vec<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LsqOutcome {
    pub fn cost(&self) -> f64 {
        self.residuals.norm_squared()
    }

    pub fn residual_norm(&self) -> f64 {
        self.residuals.norm()
    }

    /// `s²·(JᵀJ)⁻¹` with `s² = Σr²/(m − n)`; `None` when singular or when
    /// there are no degrees of freedom.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let (m, n) = self.jacobian.shape();
        if m <= n {
            return None;
        }
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = invert_spd(&jtj)?;
        let s2 = self.cost() / (m - n) as f64;
        Some(inv * s2)
    }

    /// Square roots of the covariance diagonal, or NaN when unavailable.
    pub fn stderrs(&self) -> Vec<f64> {
        match self.covariance() {
            Some(c) => (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
            None => vec![f64::NAN; self.params.len()],
        }
    }
}

/// Inverse of a symmetric positive semi-definite matrix via a column-scaled
/// Cholesky factorization.
pub(crate) fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].max(0.0).sqrt()).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]));
    let inv = scaled.cholesky()?.inverse();
    let out = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j]));
    out.iter().all(|x| x.is_finite()).then_some(out)
}

fn gradient_cosine(j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for c in 0..j.ncols() {
        let col = j.column(c);
        let cn = col.norm();
        if cn > 0.0 {
            worst = worst.max((col.dot(r) / (cn * rn)).abs());
        }
    }
    worst
}

/// Minimizes `‖r(p)‖²`. `eval` returns the residual vector and its Jacobian
/// `∂r/∂p`; `feasible` rejects parameter vectors outside the model domain.
pub fn minimize<E, V>(p0: &[f64], eval: E, feasible: V, opts: &LsqOptions) -> LsqOutcome
where
    E: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
    V: Fn(&[f64]) -> bool,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let (mut r, mut j) = eval(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let finite = |r: &DVector<f64>| r.iter().all(|x| x.is_finite());

    while iterations < opts.max_iterations {
        iterations += 1;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(1e-300)).collect();
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag[i];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let pmax = p.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            small_step =
                step.iter().zip(&p).all(|(s, x)| s.abs() <= opts.step_tolerance * (x.abs() + 1e-6 * pmax + 1e-300));
            if !feasible(&cand) {
                lambda *= 4.0;
                if small_step {
                    break;
                }
                continue;
            }
            let (rc, jc) = eval(&cand);
            let cc = rc.norm_squared();
            if finite(&rc) && cc <= cost {
                p = cand;
                r = rc;
                j = jc;
                let rel_drop = (cost - cc) / cost.max(1e-300);
                cost = cc;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_drop < 1e-15 && !small_step {
                    small_step = true;
                }
                break;
            }
            lambda *= 4.0;
            if small_step {
                break;
            }
        }
        let stationary = gradient_cosine(&j, &r) <= opts.gradient_tolerance || cost.sqrt() <= opts.residual_floor;
        if cost == 0.0 || (small_step && stationary) {
            converged = true;
            break;
        }
        if !accepted && small_step {
            converged = stationary;
            break;
        }
        if !accepted && lambda > 1e30 {
            break;
        }
    }
    LsqOutcome { params: p, residuals: r, jacobian: j, iterations, converged }
}
