//! Damped (Levenberg–Marquardt) nonlinear least squares for the small curve
//! models used by the analysis: exponential visibility decay, Lorentzian
//! lineshape, and the fringe fit. Dense problems of ≤ 8 parameters; normal
//! equations solved by Gaussian elimination with partial pivoting.

#![allow(clippy::needless_range_loop)]

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("normal equations are singular (iteration {0})")]
    Singular(usize),
    #[error("model evaluated to a non-finite value")]
    NonFinite,
    #[error("weights must be positive and match the data length")]
    BadWeights,
}

/// A scalar curve y = f(p; x) with analytic parameter gradient.
pub trait CurveModel {
    fn n_params(&self) -> usize;
    fn value(&self, params: &[f64], x: f64) -> f64;
    /// ∂f/∂p_i into `grad` (length `n_params`).
    fn gradient(&self, params: &[f64], x: f64, grad: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative parameter-change tolerance for convergence.
    pub rel_tolerance: f64,
    /// Initial damping factor.
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_tolerance: 1e-10,
            lambda0: 1e-3,
        }
    }
}

/// Converged fit: parameters, their standard errors, and goodness-of-fit.
#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Parameter standard errors from the Jacobian at the optimum. With
    /// weights = 1/σ² these come straight from (JᵀWJ)⁻¹; unweighted they are
    /// scaled by the reduced χ².
    pub stderr: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub residual_rms: f64,
    pub iterations: usize,
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_linear(a.to_vec(), e)?);
    }
    // cols[j] is the j-th column of the inverse
    let mut inv = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

fn chi2_of(model: &dyn CurveModel, p: &[f64], x: &[f64], y: &[f64], w: &[f64]) -> Option<f64> {
    let mut s = 0.0;
    for i in 0..x.len() {
        let f = model.value(p, x[i]);
        if !f.is_finite() {
            return None;
        }
        s += w[i] * (y[i] - f) * (y[i] - f);
    }
    Some(s)
}

/// Fit `model` to (x, y) by damped least squares. `weights`, when given, are
/// 1/σ² per point; otherwise unit weights are used and parameter errors are
/// scaled by the reduced χ².
pub fn lm_fit(
    model: &dyn CurveModel,
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    initial: &[f64],
    opts: &LmOptions,
) -> Result<LmFit, FitError> {
    let np = model.n_params();
    let n = x.len();
    if n < np {
        return Err(FitError::TooFewPoints { needed: np, got: n });
    }
    let unit;
    let w: &[f64] = match weights {
        Some(w) => {
            if w.len() != n || w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(FitError::BadWeights);
            }
            w
        }
        None => {
            unit = vec![1.0; n];
            &unit
        }
    };

    let mut p = initial.to_vec();
    let mut lambda = opts.lambda0;
    let mut chi2 = chi2_of(model, &p, x, y, w).ok_or(FitError::NonFinite)?;
    let mut grad = vec![0.0; np];
    let mut converged_at = None;

    for iter in 0..opts.max_iterations {
        // assemble JᵀWJ and JᵀW·r
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for i in 0..n {
            let f = model.value(&p, x[i]);
            model.gradient(&p, x[i], &mut grad);
            let r = y[i] - f;
            for a in 0..np {
                jtr[a] += w[i] * grad[a] * r;
                for b in a..np {
                    jtj[a][b] += w[i] * grad[a] * grad[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        // damped step: (JᵀWJ + λ·diag(JᵀWJ))·δ = JᵀW·r
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for a in 0..np {
                let d = if damped[a][a] > 0.0 {
                    damped[a][a]
                } else {
                    1.0
                };
                damped[a][a] += lambda * d;
            }
            let Some(step) = solve_linear(damped, jtr.clone()) else {
                return Err(FitError::Singular(iter));
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, d)| a + d).collect();
            match chi2_of(model, &trial, x, y, w) {
                Some(c2) if c2 <= chi2 => {
                    let small = step
                        .iter()
                        .zip(&p)
                        .all(|(d, v)| d.abs() <= opts.rel_tolerance * (v.abs() + 1e-30));
                    let rel_drop = (chi2 - c2) / chi2.max(1e-300);
                    p = trial;
                    chi2 = c2;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if small || rel_drop < 1e-14 {
                        converged_at = Some(iter + 1);
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        // cannot improve: treat the current point as the optimum
                        converged_at = Some(iter + 1);
                        accepted = true;
                        break;
                    }
                }
            }
        }
        if !accepted {
            return Err(FitError::NoConvergence(opts.max_iterations));
        }
        if converged_at.is_some() {
            break;
        }
    }
    let iterations = converged_at.ok_or(FitError::NoConvergence(opts.max_iterations))?;

    // covariance from the undamped normal matrix at the optimum
    let mut jtj = vec![vec![0.0; np]; np];
    for i in 0..n {
        model.gradient(&p, x[i], &mut grad);
        for a in 0..np {
            for b in a..np {
                jtj[a][b] += w[i] * grad[a] * grad[b];
            }
        }
    }
    for a in 0..np {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let mut cov = invert(&jtj).ok_or(FitError::Singular(iterations))?;
    if weights.is_none() && n > np {
        let s2 = chi2 / (n - np) as f64;
        for row in &mut cov {
            for v in row.iter_mut() {
                *v *= s2;
            }
        }
    }
    let stderr = (0..np).map(|a| cov[a][a].max(0.0).sqrt()).collect();
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - model.value(&p, xi)).powi(2))
        .sum();
    Ok(LmFit {
        params: p,
        stderr,
        covariance: cov,
        residual_rms: (ssr / n as f64).sqrt(),
        chi2,
        iterations,
    })
}

/// Central-difference gradient of `model` at (p, x) with Richardson
/// extrapolation; used to cross-check the analytic gradients.
pub fn finite_difference_gradient(model: &dyn CurveModel, params: &[f64], x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.n_params());
    for i in 0..model.n_params() {
        let h = 1e-5 * params[i].abs().max(1e-5);
        let central = |step: f64| {
            let mut lo = params.to_vec();
            let mut hi = params.to_vec();
            lo[i] -= step;
            hi[i] += step;
            (model.value(&hi, x) - model.value(&lo, x)) / (2.0 * step)
        };
        // cancel the O(h²) truncation term
        out.push((4.0 * central(h / 2.0) - central(h)) / 3.0);
    }
    out
}

/// Worst relative disagreement between analytic and finite-difference
/// gradients over the given sample points.
pub fn jacobian_agreement(model: &dyn CurveModel, params: &[f64], xs: &[f64]) -> f64 {
    let mut grad = vec![0.0; model.n_params()];
    let mut worst: f64 = 0.0;
    for &x in xs {
        model.gradient(params, x, &mut grad);
        let fd = finite_difference_gradient(model, params, x);
        let scale = grad
            .iter()
            .chain(fd.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        for (a, b) in grad.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// y = p0·e^(−p1·x), the shape used by the decay fit
    struct Exp2;
    impl CurveModel for Exp2 {
        fn n_params(&self) -> usize {
            2
        }
        fn value(&self, p: &[f64], x: f64) -> f64 {
            p[0] * (-p[1] * x).exp()
        }
        fn gradient(&self, p: &[f64], x: f64, g: &mut [f64]) {
            let e = (-p[1] * x).exp();
            g[0] = e;
            g[1] = -x * p[0] * e;
        }
    }

    #[test]
    fn recovers_exact_exponential() {
        let xs: Vec<f64> = (0..9).map(|i| 0.5 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 0.8 * (-0.4 * x).exp()).collect();
        let fit = lm_fit(&Exp2, &xs, &ys, None, &[1.0, 1.0], &LmOptions::default()).unwrap();
        assert_relative_eq!(fit.params[0], 0.8, max_relative = 1e-9);
        assert_relative_eq!(fit.params[1], 0.4, max_relative = 1e-9);
        assert!(fit.chi2 < 1e-18);
    }

    #[test]
    fn weighted_fit_matches_known_sigma_errors() {
        // with weights 1/σ² the reported stderr is the usual propagated one;
        // check a noiseless fit against the analytic 2×2 covariance
        let xs: Vec<f64> = (0..20).map(|i| 0.25 * i as f64).collect();
        let sigma = 0.01;
        let ys: Vec<f64> = xs.iter().map(|&x| 1.0 * (-0.3 * x).exp()).collect();
        let w = vec![1.0 / (sigma * sigma); xs.len()];
        let fit = lm_fit(
            &Exp2,
            &xs,
            &ys,
            Some(&w),
            &[0.5, 0.1],
            &LmOptions::default(),
        )
        .unwrap();
        // analytic JᵀWJ at the optimum
        let p = [1.0, 0.3];
        let mut jtj = [[0.0f64; 2]; 2];
        for &x in &xs {
            let e = (-p[1] * x).exp();
            let j = [e, -x * p[0] * e];
            for a in 0..2 {
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b] / (sigma * sigma);
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        let expected = [(jtj[1][1] / det).sqrt(), (jtj[0][0] / det).sqrt()];
        assert_relative_eq!(fit.stderr[0], expected[0], max_relative = 1e-6);
        assert_relative_eq!(fit.stderr[1], expected[1], max_relative = 1e-6);
    }

    #[test]
    fn analytic_gradient_agrees_with_finite_differences() {
        let xs: Vec<f64> = (0..8).map(|i| 0.6 * i as f64).collect();
        let agreement = jacobian_agreement(&Exp2, &[0.9, 0.35], &xs);
        assert!(agreement < 1e-6, "jacobian mismatch {agreement}");
    }

    #[test]
    fn rejects_underdetermined_and_bad_weights() {
        let xs = [1.0];
        let ys = [1.0];
        assert!(matches!(
            lm_fit(&Exp2, &xs, &ys, None, &[1.0, 1.0], &LmOptions::default()),
            Err(FitError::TooFewPoints { .. })
        ));
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 0.5, 0.25];
        let w = [1.0, -1.0, 1.0];
        assert!(matches!(
            lm_fit(
                &Exp2,
                &xs,
                &ys,
                Some(&w),
                &[1.0, 1.0],
                &LmOptions::default()
            ),
            Err(FitError::BadWeights)
        ));
    }

    #[test]
    fn solve_linear_handles_pivoting() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve_linear(a, vec![4.0, 5.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }
}
