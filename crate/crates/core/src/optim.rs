//! Damped Gauss–Newton (Levenberg–Marquardt) for small nonlinear
//! least-squares problems with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct GnOptions {
    pub max_iter: usize,
    /// Stop once the max-abs residual falls below this.
    pub tol: f64,
}

impl Default for GnOptions {
    fn default() -> Self {
        GnOptions { max_iter: 200, tol: 1e-13 }
    }
}

#[derive(Clone, Debug)]
pub struct GnResult {
    pub x: Vec<f64>,
    /// Max-abs residual at `x`.
    pub residual: f64,
    pub iterations: usize,
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) })
}

fn sq_norm(r: &[f64]) -> f64 {
    let s: f64 = r.iter().map(|v| v * v).sum();
    if s.is_nan() {
        f64::INFINITY
    } else {
        s
    }
}

/// Minimize `‖f(x)‖²` over the entries of `x` marked free; fixed entries
/// keep their starting values.
pub fn gauss_newton<F>(f: F, x0: &[f64], free: &[bool], opts: &GnOptions) -> GnResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let idx: Vec<usize> = (0..x0.len()).filter(|&i| free[i]).collect();
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut cost = sq_norm(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iter && max_abs(&r) > opts.tol && !idx.is_empty() {
        iterations += 1;
        let m = r.len();
        let mut jac = DMatrix::zeros(m, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            let h = 1e-7 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let (rp, rm) = (f(&xp), f(&xm));
            for k in 0..m {
                jac[(k, c)] = (rp[k] - rm[k]) / (2.0 * h);
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let mut improved = false;
        for _ in 0..16 {
            let mut a = jtj.clone();
            for d in 0..idx.len() {
                a[(d, d)] += lambda * (jtj[(d, d)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = x.clone();
            for (c, &i) in idx.iter().enumerate() {
                trial[i] += step[c];
            }
            let rt = f(&trial);
            let ct = sq_norm(&rt);
            if ct < cost {
                let small = step.norm() <= 1e-15 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = !small;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    GnResult { residual: max_abs(&r), x, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_residuals() {
        let f = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let r = gauss_newton(f, &[-1.2, 1.0], &[true, true], &GnOptions::default());
        assert!(r.residual < 1e-12, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-10 && (r.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fixed_entries_are_held() {
        // x*y = 6 with x pinned at 2.
        let f = |p: &[f64]| vec![p[0] * p[1] - 6.0];
        let r = gauss_newton(f, &[2.0, 0.5], &[false, true], &GnOptions::default());
        assert_eq!(r.x[0], 2.0);
        assert!((r.x[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn inconsistent_system_reports_floor() {
        let f = |p: &[f64]| vec![p[0] - 1.0, p[0] + 1.0];
        let r = gauss_newton(f, &[5.0], &[true], &GnOptions::default());
        assert!((r.residual - 1.0).abs() < 1e-8);
    }
}
