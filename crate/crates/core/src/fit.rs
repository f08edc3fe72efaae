// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Damped least squares (Levenberg-Marquardt) shared by all curve fits.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which a successful step ends the fit.
    pub ftol: f64,
    /// Relative parameter change below which a successful step ends the fit.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient below which the fit ends.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-14,
            xtol: 1e-13,
            gtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// √Σr² at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

// Central differences; `h_j` tracks the parameter magnitude.
fn jacobian<F>(f: &F, p: &[f64], n_resid: usize) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut jac = DMatrix::zeros(n_resid, p.len());
    let mut probe = p.to_vec();
    let mut plus = vec![0.0; n_resid];
    let mut minus = vec![0.0; n_resid];
    for j in 0..p.len() {
        let h = 6e-6 * p[j].abs().max(1e-6);
        probe[j] = p[j] + h;
        f(&probe, &mut plus);
        probe[j] = p[j] - h;
        f(&probe, &mut minus);
        probe[j] = p[j];
        for i in 0..n_resid {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes Σᵢ rᵢ(p)² starting from `p0`.
///
/// `residuals(p, out)` fills `out` (length `n_resid`). Parameters should be
/// pre-scaled to order unity by the caller.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], n_resid: usize, opts: LmOptions) -> Result<LmReport>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = vec![0.0; n_resid];
    residuals(&p, &mut r);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(Error::DegenerateFit("non-finite residual at the initial guess".into()));
    }
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n_resid];

    for iter in 0..opts.max_iterations {
        if c == 0.0 {
            return Ok(LmReport { params: p, residual_norm: 0.0, iterations: iter });
        }
        let jac = jacobian(&residuals, &p, n_resid);
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * rv;
        let diag: Vec<f64> = (0..n).map(|j| jtj[(j, j)].max(1e-30)).collect();
        let gnorm = (0..n)
            .map(|j| grad[j].abs() / (diag[j].sqrt() * c.sqrt()))
            .fold(0.0, f64::max);
        if gnorm < opts.gtol {
            return Ok(LmReport { params: p, residual_norm: c.sqrt(), iterations: iter });
        }

        let mut improved = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * diag[j];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            for j in 0..n {
                trial[j] = p[j] + step[j];
            }
            residuals(&trial, &mut r_trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < c {
                let rel_cost = (c - c_trial) / c;
                let pnorm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                let snorm = step.norm();
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                c = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_cost < opts.ftol || snorm < opts.xtol * (pnorm + opts.xtol) {
                    return Ok(LmReport { params: p, residual_norm: c.sqrt(), iterations: iter + 1 });
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // No downhill step at any damping: at a (numerical) minimum.
            return Ok(LmReport { params: p, residual_norm: c.sqrt(), iterations: iter + 1 });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations })
}

/// Ordinary least-squares line `y = a + b x`, returned as `(a, b)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_a_decaying_exponential() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&x| 2.5 * (-x / 1.3).exp() + 0.2).collect();
        let rep = levenberg_marquardt(
            |p, out| {
                for (o, (&x, &yy)) in out.iter_mut().zip(t.iter().zip(&y)) {
                    *o = p[0] * (-x / p[1]).exp() + p[2] - yy;
                }
            },
            &[1.0, 0.5, 0.0],
            t.len(),
            LmOptions::default(),
        )
        .unwrap();
        assert!((rep.params[0] - 2.5).abs() < 1e-8);
        assert!((rep.params[1] - 1.3).abs() < 1e-8);
        assert!((rep.params[2] - 0.2).abs() < 1e-8);
        assert!(rep.residual_norm < 1e-8);
    }

    #[test]
    fn exact_start_returns_immediately() {
        let rep = levenberg_marquardt(|p, out| out[0] = p[0] - 3.0, &[3.0], 1, LmOptions::default()).unwrap();
        assert_eq!(rep.params, vec![3.0]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = LmOptions { max_iterations: 1, ftol: 0.0, xtol: 0.0, gtol: 0.0 };
        let res = levenberg_marquardt(
            |p, out| {
                out[0] = 10.0 * (p[1] - p[0] * p[0]);
                out[1] = 1.0 - p[0];
            },
            &[-1.2, 1.0],
            2,
            opts,
        );
        assert!(matches!(res, Err(Error::NoConvergence { iterations: 1 })));
    }

    #[test]
    fn regression_line() {
        let (a, b) = linear_regression(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert!(linear_regression(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
