//! Commutators of deterministic generators, structure constants, and
//! matching of two algebras by a change of basis.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::determining::VectorField;
use crate::expr::{EvalError, Expr};
use crate::grid::{sample_points, Window};
use crate::linalg::{lstsq, rank};
use crate::optim::{gauss_newton, GnOptions};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LieError {
    #[error("brackets are defined for deterministic generators only; {0} has a stochastic part")]
    StochasticPart(String),
    #[error("basis is not closed: [X{i}, X{j}] leaves residual {residual:.3e}", i = .i + 1, j = .j + 1)]
    NonClosure { i: usize, j: usize, residual: f64 },
    #[error("basis fields are linearly dependent on the sample grid")]
    DependentBasis,
    #[error("structure constants violate the Jacobi identity by {0:.3e}")]
    Jacobi(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `v(h) = τ h_t + φ h_x`.
fn apply(v: &VectorField, h: &Expr) -> Expr {
    &v.tau * h.diff("t") + &v.phi * h.diff("x")
}

/// Commutator `[v, w]` of the deterministic parts.
pub fn bracket(v: &VectorField, w: &VectorField) -> Result<VectorField, LieError> {
    for f in [v, w] {
        if !f.is_deterministic() {
            return Err(LieError::StochasticPart(f.to_string()));
        }
    }
    let tau = apply(v, &w.tau) - apply(w, &v.tau);
    let phi = apply(v, &w.phi) - apply(w, &v.phi);
    Ok(VectorField::deterministic(tau, phi).simplify())
}

/// `c[k][i][j]` with `[X_i, X_j] = Σ_k c[k][i][j] X_k`, zero-based.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureConstants {
    n: usize,
    c: Vec<f64>,
}

impl StructureConstants {
    pub fn zeros(n: usize) -> Self {
        StructureConstants { n, c: vec![0.0; n * n * n] }
    }

    /// From the nonzero entries `(k, i, j, value)` with `i < j`; the
    /// antisymmetric partner is filled in.
    pub fn from_entries(n: usize, entries: &[(usize, usize, usize, f64)]) -> Self {
        let mut s = StructureConstants::zeros(n);
        for &(k, i, j, v) in entries {
            s.set(k, i, j, v);
            s.set(k, j, i, -v);
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[(k * self.n + i) * self.n + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.c[(k * n + i) * n + j] = v;
    }

    pub fn max_abs_diff(&self, other: &StructureConstants) -> f64 {
        if self.n != other.n {
            return f64::INFINITY;
        }
        self.c.iter().zip(&other.c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_antisymmetry_violation(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.n {
            for i in 0..self.n {
                for j in 0..self.n {
                    m = m.max((self.get(k, i, j) + self.get(k, j, i)).abs());
                }
            }
        }
        m
    }

    /// Max over `i, j, l, m` of `Σ_k (c^k_ij c^m_kl + c^k_jl c^m_ki + c^k_li c^m_kj)`.
    pub fn jacobi_violation(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        let s: f64 = (0..n)
                            .map(|k| {
                                self.get(k, i, j) * self.get(m, k, l)
                                    + self.get(k, j, l) * self.get(m, k, i)
                                    + self.get(k, l, i) * self.get(m, k, j)
                            })
                            .sum();
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Constants of the basis `X̃_i = Σ_j A[i][j] X_j`; `None` if `A` is singular.
    pub fn transformed(&self, a: &DMatrix<f64>) -> Option<StructureConstants> {
        let inv = a.clone().try_inverse()?;
        let n = self.n;
        let mut out = StructureConstants::zeros(n);
        for i in 0..n {
            for j in 0..n {
                // Coefficients of [X̃_i, X̃_j] in the original basis.
                let mut e = DVector::zeros(n);
                for p in 0..n {
                    for q in 0..n {
                        let w = a[(i, p)] * a[(j, q)];
                        if w != 0.0 {
                            for r in 0..n {
                                e[r] += w * self.get(r, p, q);
                            }
                        }
                    }
                }
                let ek = inv.transpose() * e;
                for k in 0..n {
                    out.set(k, i, j, ek[k]);
                }
            }
        }
        Some(out)
    }

    /// Nonzero entries with `i < j`, as `(k, i, j, value)`.
    pub fn nonzero(&self, tol: f64) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                for k in 0..self.n {
                    let v = self.get(k, i, j);
                    if v.abs() > tol {
                        out.push((k, i, j, v));
                    }
                }
            }
        }
        out
    }
}

fn fmt_coef(v: f64) -> String {
    crate::expr::Expr::constant(crate::expr::snap_number(v, 1e-9)).to_string()
}

impl fmt::Display for StructureConstants {
    /// One line per nonzero bracket, `[X1, X2] = 2*X2`; brackets that vanish
    /// print as `= 0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let terms: Vec<String> = (0..self.n)
                    .filter(|&k| self.get(k, i, j).abs() > 1e-12)
                    .map(|k| {
                        let v = self.get(k, i, j);
                        match fmt_coef(v).as_str() {
                            "1" => format!("X{}", k + 1),
                            "-1" => format!("-X{}", k + 1),
                            s => format!("{s}*X{}", k + 1),
                        }
                    })
                    .collect();
                let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ").replace("+ -", "- ") };
                writeln!(f, "[X{}, X{}] = {rhs}", i + 1, j + 1)?;
            }
        }
        Ok(())
    }
}

fn sample_field(v: &VectorField, points: &[(f64, f64)], params: &HashMap<String, f64>) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(2 * points.len());
    let tau = v.tau.compile_with_params(params)?;
    let phi = v.phi.compile_with_params(params)?;
    for p in points {
        out.push(tau.eval(&[p.0, p.1])?);
        out.push(phi.eval(&[p.0, p.1])?);
    }
    Ok(out)
}

/// Points used by [`structure_constants`].
pub const GRID_POINTS: usize = 32;

/// Structure constants by least squares of each bracket against the basis
/// on a grid.
pub fn structure_constants(
    basis: &[VectorField],
    params: &HashMap<String, f64>,
    window: Window,
    seed: u64,
) -> Result<StructureConstants, LieError> {
    let n = basis.len();
    let points = sample_points(window, GRID_POINTS, seed);
    let cols: Vec<Vec<f64>> = basis.iter().map(|v| sample_field(v, &points, params)).collect::<Result<_, _>>()?;
    for v in basis {
        if !v.is_deterministic() {
            return Err(LieError::StochasticPart(v.to_string()));
        }
    }
    let m = 2 * points.len();
    let b = DMatrix::from_fn(m, n, |r, c| cols[c][r]);
    if rank(&b, 1e-9) < n {
        return Err(LieError::DependentBasis);
    }
    let mut raw = StructureConstants::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let br = bracket(&basis[i], &basis[j])?;
            let rhs = DVector::from_vec(sample_field(&br, &points, params)?);
            let coef = lstsq(&b, &rhs, 1e-12);
            let residual = (&b * &coef - &rhs).amax();
            if residual > 1e-8 * rhs.amax().max(1.0) {
                let (i, j) = (i.min(j), i.max(j));
                return Err(LieError::NonClosure { i, j, residual });
            }
            for k in 0..n {
                raw.set(k, i, j, coef[k]);
            }
        }
    }
    let mut out = StructureConstants::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.5 * (raw.get(k, i, j) - raw.get(k, j, i));
                if v.abs() < 1e-13 {
                    v = 0.0;
                }
                out.set(k, i, j, v);
            }
        }
    }
    let jac = out.jacobi_violation();
    if jac > 1e-9 {
        return Err(LieError::Jacobi(jac));
    }
    Ok(out)
}

/// `X̃_i = Σ_j a[i][j] X_j` taking the source constants to the target ones.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatch {
    pub a: DMatrix<f64>,
    /// Max deviation of the transformed constants from the target.
    pub residual: f64,
}

impl BasisMatch {
    /// The transformed basis.
    pub fn apply(&self, basis: &[VectorField]) -> Vec<VectorField> {
        (0..self.a.nrows())
            .map(|i| {
                let w: Vec<f64> = self.a.row(i).iter().copied().collect();
                VectorField::combination(&w, basis)
            })
            .collect()
    }

    fn zeros(&self) -> usize {
        self.a.iter().filter(|v| **v == 0.0).count()
    }

    fn units(&self) -> usize {
        self.a.iter().filter(|v| (v.abs() - 1.0).abs() < 1e-12).count()
    }

    fn positives(&self) -> usize {
        self.a.iter().filter(|v| **v > 0.0).count()
    }

    /// Preference order: sparse, unit entries, positive entries, small
    /// residual, then lexicographic.
    fn rank_cmp(&self, other: &BasisMatch) -> Ordering {
        other
            .zeros()
            .cmp(&self.zeros())
            .then(other.units().cmp(&self.units()))
            .then(other.positives().cmp(&self.positives()))
            .then(self.residual.total_cmp(&other.residual))
            .then_with(|| {
                self.a
                    .iter()
                    .zip(other.a.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

impl fmt::Display for BasisMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.a.nrows() {
            let terms: Vec<String> = (0..self.a.ncols())
                .filter(|&j| self.a[(i, j)] != 0.0)
                .map(|j| match fmt_coef(self.a[(i, j)]).as_str() {
                    "1" => format!("X{}", j + 1),
                    "-1" => format!("-X{}", j + 1),
                    s => format!("{s}*X{}", j + 1),
                })
                .collect();
            writeln!(f, "X~{} = {}", i + 1, terms.join(" + ").replace("+ -", "- "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum MatchOutcome {
    Matched {
        best: BasisMatch,
        /// Further distinct matches, best first.
        alternatives: Vec<BasisMatch>,
    },
    /// No invertible change of basis reached the tolerance.
    NoMatch { best_residual: f64, reason: String },
}

impl MatchOutcome {
    pub fn best(&self) -> Option<&BasisMatch> {
        match self {
            MatchOutcome::Matched { best, .. } => Some(best),
            MatchOutcome::NoMatch { .. } => None,
        }
    }

    /// Best match followed by the alternatives.
    pub fn all(&self) -> Vec<&BasisMatch> {
        match self {
            MatchOutcome::Matched { best, alternatives } => std::iter::once(best).chain(alternatives).collect(),
            MatchOutcome::NoMatch { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatchOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Extra values entries may snap to, besides `0, ±1, ±2`. Usually the
    /// equation parameters; `±p, ±1/p, ±2p, ±1/(2p)` are all added.
    pub params: Vec<f64>,
    pub tol: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions { restarts: 64, seed: 0, params: Vec::new(), tol: 1e-8 }
    }
}

fn nice_values(params: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0, 1.0, -1.0, 2.0, -2.0];
    for &p in params {
        if p != 0.0 && p.is_finite() {
            for x in [p, 1.0 / p, 2.0 * p, 0.5 / p] {
                v.push(x);
                v.push(-x);
            }
        }
    }
    v.dedup();
    v
}

/// `E_ijr = Σ_pq A_ip A_jq c^r_pq − Σ_k T^k_ij A_kr` for `i < j`.
fn match_equations(src: &StructureConstants, tgt: &StructureConstants, a: &[f64]) -> Vec<f64> {
    let n = src.n;
    let at = |i: usize, j: usize| a[i * n + j];
    let mut out = Vec::with_capacity(n * n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            for r in 0..n {
                let mut s = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        let c = src.get(r, p, q);
                        if c != 0.0 {
                            s += at(i, p) * at(j, q) * c;
                        }
                    }
                }
                for k in 0..n {
                    s -= tgt.get(k, i, j) * at(k, r);
                }
                out.push(s);
            }
        }
    }
    out
}

fn candidate(src: &StructureConstants, tgt: &StructureConstants, a: &[f64]) -> Option<BasisMatch> {
    let n = src.n;
    let m = DMatrix::from_row_slice(n, n, a);
    if m.determinant().abs() <= 1e-9 {
        return None;
    }
    let residual = src.transformed(&m)?.max_abs_diff(tgt);
    Some(BasisMatch { a: m, residual })
}

/// One restart: converge, then greedily snap entries to nice values.
fn restart(
    src: &StructureConstants,
    tgt: &StructureConstants,
    start: Vec<f64>,
    nice: &[f64],
    tol: f64,
) -> (Option<BasisMatch>, f64) {
    let nn = start.len();
    let f = |a: &[f64]| match_equations(src, tgt, a);
    let opts = GnOptions { max_iter: 200, tol: 1e-14 };
    let first = gauss_newton(f, &start, &vec![true; nn], &opts);
    let floor = candidate(src, tgt, &first.x).map(|c| c.residual).unwrap_or(f64::INFINITY);
    if first.residual > 1e-8 || floor > tol {
        return (None, floor);
    }
    let mut x = first.x;
    let mut free = vec![true; nn];
    let mut order: Vec<usize> = (0..nn).collect();
    order.sort_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs()));
    for i in order {
        let nearest = nice
            .iter()
            .copied()
            .filter(|v| *v != 0.0)
            .min_by(|a, b| (a - x[i]).abs().total_cmp(&(b - x[i]).abs()))
            .unwrap_or(1.0);
        let unit = if x[i] < 0.0 { -1.0 } else { 1.0 };
        let mut tries = vec![0.0, unit];
        if nearest != unit {
            tries.push(nearest);
        }
        for value in tries {
            let mut trial = x.clone();
            trial[i] = value;
            free[i] = false;
            let r = gauss_newton(f, &trial, &free, &opts);
            if r.residual < 1e-12 && candidate(src, tgt, &r.x).is_some_and(|c| c.residual < tol) {
                x = r.x;
                break;
            }
            free[i] = true;
        }
    }
    for v in x.iter_mut() {
        if v.abs() < 1e-7 {
            *v = 0.0;
        }
    }
    let c = candidate(src, tgt, &x).filter(|c| c.residual < tol);
    (c, floor)
}

/// Find `A` with the transformed source constants equal to the target.
pub fn match_basis(src: &StructureConstants, tgt: &StructureConstants, opts: &MatchOptions) -> MatchOutcome {
    let n = src.n;
    if n != tgt.n {
        return MatchOutcome::NoMatch {
            best_residual: f64::INFINITY,
            reason: format!("dimension mismatch: source algebra has dimension {n}, target {}", tgt.n),
        };
    }
    if n == 0 {
        return MatchOutcome::Matched {
            best: BasisMatch { a: DMatrix::zeros(0, 0), residual: 0.0 },
            alternatives: Vec::new(),
        };
    }
    let nice = nice_values(&opts.params);
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            if r == 0 {
                // The identity is tried first.
                return (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
            }
            (0..n * n).map(|_| nice[rng.random_range(0..nice.len())] + rng.random_range(-0.1..0.1)).collect()
        })
        .collect();
    let results = crate::par_map(&starts, |s| restart(src, tgt, s.clone(), &nice, opts.tol));
    let mut found: Vec<BasisMatch> = Vec::new();
    let mut best_floor = f64::INFINITY;
    for (c, floor) in results {
        best_floor = best_floor.min(floor);
        if let Some(c) = c {
            if !found.iter().any(|f| (&f.a - &c.a).amax() < 1e-9) {
                found.push(c);
            }
        }
    }
    found.sort_by(|a, b| a.rank_cmp(b));
    if found.is_empty() {
        return MatchOutcome::NoMatch {
            best_residual: best_floor,
            reason: format!("no invertible change of basis found after {} restarts", opts.restarts),
        };
    }
    let best = found.remove(0);
    MatchOutcome::Matched { best, alternatives: found }
}
