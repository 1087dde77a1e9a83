//! Maps `μ = (μ₁, μ₂): (t, x) ↦ (s, y)` carrying one equation onto
//! another, found from matched pairs of symmetry generators.
//!
//! For a source generator `[τ∂t + φ∂x]^D + [φ̃∂x]^S` paired with a target
//! generator `[ρ∂s + ψ∂y]^D + [ψ̃∂y]^S`, the map must satisfy
//!
//! ```text
//! ρ∘μ = μ₁_t τ + μ₁_x φ + ½ μ₁_xx φ̃²
//!   0 = μ₁_x φ̃
//! ψ∘μ = μ₂_t τ + μ₂_x φ + ½ μ₂_xx φ̃²
//! ψ̃∘μ = μ₂_x φ̃
//! ```

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ansatz::{parse_dictionary, sample_linear_system, AnsatzError, RowEvaluator, VERIFY_OFFSET};
use crate::determining::{DeterminingSystem, Sde, SystemKind, VectorField};
use crate::expr::{snap_number, EvalError, Expr, SymbolTable};
use crate::grid::{PointSampler, Window};
use crate::lie::{
    match_basis, structure_constants, BasisMatch, LieError, MatchOptions, MatchOutcome, StructureConstants,
};
use crate::linalg::{lstsq, nullspace, RANK_TOL};
use crate::optim::{gauss_newton, GnOptions};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("target coefficient {0} mentions variables other than s and y")]
    TargetVariables(String),
    #[error("at least one pair of generators is required")]
    NoPairs,
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error("no map in the ansatz solves the system (max residual {residual:.3e})")]
    NoSolution { residual: f64 },
    #[error("new time {mu1} {reason} on the verification window")]
    NotMonotone { mu1: String, reason: String },
    #[error("parameter {name} has different values in the two equations")]
    ParameterClash { name: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `(s, y) = (μ₁(t,x), μ₂(t,x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformMap {
    pub mu1: Expr,
    pub mu2: Expr,
}

impl TransformMap {
    pub fn new(mu1: Expr, mu2: Expr) -> Self {
        TransformMap { mu1: mu1.simplify(), mu2: mu2.simplify() }
    }

    pub fn identity() -> Self {
        TransformMap::new(Expr::var("t"), Expr::var("x"))
    }

    pub fn parse(mu1: &str, mu2: &str, table: &SymbolTable) -> Result<Self, crate::expr::ParseError> {
        Ok(TransformMap::new(table.parse(mu1)?, table.parse(mu2)?))
    }

    fn bindings(&self) -> HashMap<String, Expr> {
        [("s".to_string(), self.mu1.clone()), ("y".to_string(), self.mu2.clone())].into()
    }

    /// New time must depend on `t` alone and increase across the window.
    pub fn check_time_change(&self, params: &HashMap<String, f64>, window: Window) -> Result<(), TransformError> {
        if !self.mu1.diff("x").is_zero() {
            return Err(TransformError::NotMonotone { mu1: self.mu1.to_string(), reason: "depends on x".into() });
        }
        let d = self.mu1.diff("t").compile_with_params(params)?;
        for k in 0..=200 {
            let t = window.t0 + (window.t1 - window.t0) * k as f64 / 200.0;
            if d.eval(&[t, 0.0])? <= 0.0 {
                return Err(TransformError::NotMonotone {
                    mu1: self.mu1.to_string(),
                    reason: format!("is not increasing at t = {t}"),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for TransformMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mu1 = {}\nmu2 = {}", self.mu1, self.mu2)
    }
}

/// Source generators in `(t, x)` paired with target generators in `(s, y)`.
#[derive(Clone, Debug)]
pub struct PairedSymmetries {
    pub pairs: Vec<(VectorField, VectorField)>,
}

impl PairedSymmetries {
    /// Pair two bases written in `(t, x)`, renaming the target's variables.
    pub fn from_bases(source: &[VectorField], target: &[VectorField]) -> Self {
        PairedSymmetries {
            pairs: source.iter().cloned().zip(target.iter().map(VectorField::to_target_coordinates)).collect(),
        }
    }
}

fn half() -> Expr {
    Expr::ratio(1, 2)
}

/// Four residuals per pair, with `μ` substituted into the target side.
pub fn transformation_system(pairs: &PairedSymmetries, mu: &TransformMap) -> Result<DeterminingSystem, TransformError> {
    if pairs.pairs.is_empty() {
        return Err(TransformError::NoPairs);
    }
    let b = mu.bindings();
    let (m1t, m1x) = (mu.mu1.diff("t"), mu.mu1.diff("x"));
    let (m2t, m2x) = (mu.mu2.diff("t"), mu.mu2.diff("x"));
    let (m1xx, m2xx) = (m1x.diff("x"), m2x.diff("x"));
    let mut residuals = Vec::with_capacity(4 * pairs.pairs.len());
    for (v, u) in &pairs.pairs {
        for e in [&u.tau, &u.phi, &u.phi_s] {
            if ["t", "x", "eps"].iter().any(|n| e.depends_on(n)) {
                return Err(TransformError::TargetVariables(e.to_string()));
            }
        }
        let ps2 = v.phi_s.powi(2);
        let sub = |e: &Expr| e.substitute(&b);
        residuals.push((sub(&u.tau) - (&m1t * &v.tau + &m1x * &v.phi + half() * &m1xx * &ps2)).simplify());
        residuals.push((&m1x * &v.phi_s).simplify());
        residuals.push((sub(&u.phi) - (&m2t * &v.tau + &m2x * &v.phi + half() * &m2xx * &ps2)).simplify());
        residuals.push((sub(&u.phi_s) - &m2x * &v.phi_s).simplify());
    }
    Ok(DeterminingSystem::new(SystemKind::Transformation, residuals))
}

/// Candidate functions for each component of the map.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapAnsatz {
    pub mu1: Vec<Expr>,
    pub mu2: Vec<Expr>,
}

impl MapAnsatz {
    pub fn new(mu1: Vec<Expr>, mu2: Vec<Expr>) -> Self {
        MapAnsatz { mu1, mu2 }
    }

    pub fn parse(mu1: &str, mu2: &str, table: &SymbolTable) -> Result<Self, AnsatzError> {
        Ok(MapAnsatz::new(parse_dictionary(mu1, table)?, parse_dictionary(mu2, table)?))
    }

    fn names(&self) -> (Vec<String>, Vec<String>) {
        (
            (0..self.mu1.len()).map(|k| format!("_m{k}")).collect(),
            (0..self.mu2.len()).map(|k| format!("_n{k}")).collect(),
        )
    }

    fn symbolic(&self) -> (TransformMap, Vec<String>) {
        let (m, n) = self.names();
        let expand = |d: &[Expr], names: &[String]| {
            Expr::sum(d.iter().zip(names).map(|(e, n)| Expr::param(n) * e.clone()).collect())
        };
        let map = TransformMap { mu1: expand(&self.mu1, &m), mu2: expand(&self.mu2, &n) };
        (map, m.into_iter().chain(n).collect())
    }

    fn realize(&self, c: &[f64]) -> TransformMap {
        let combine = |d: &[Expr], w: &[f64]| {
            Expr::sum(
                d.iter()
                    .zip(w)
                    .filter_map(|(e, w)| {
                        let w = snap_number(*w, 1e-9);
                        (!w.is_zero()).then(|| Expr::constant(w) * e.clone())
                    })
                    .collect(),
            )
        };
        let k = self.mu1.len();
        TransformMap::new(combine(&self.mu1, &c[..k]), combine(&self.mu2, &c[k..]))
    }
}

#[derive(Clone, Debug)]
pub struct MapOptions {
    pub points: usize,
    pub window: Window,
    pub seed: u64,
    pub verify_tol: f64,
    /// Gauge pin: `μ(t₀, x₀) = (s₀, y₀)`.
    pub pin: Option<((f64, f64), (f64, f64))>,
    pub restarts: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { points: 64, window: Window::default(), seed: 0, verify_tol: 1e-8, pin: None, restarts: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePath {
    Affine,
    Nonlinear,
}

#[derive(Clone, Debug)]
pub struct MapSolution {
    pub map: TransformMap,
    /// Max residual at fresh points.
    pub residual: f64,
    pub path: SolvePath,
    /// Dimension of the solution family left after the system (0 when unique).
    pub gauge_dim: usize,
}

fn verify(
    pairs: &PairedSymmetries,
    map: &TransformMap,
    params: &HashMap<String, f64>,
    opts: &MapOptions,
) -> Result<f64, TransformError> {
    let ds = transformation_system(pairs, map)?;
    let sampler = PointSampler::new(opts.window, opts.seed).starting_at(VERIFY_OFFSET);
    Ok(crate::ansatz::max_residual(&ds, params, sampler, 100)?)
}

fn pin_rows(ansatz: &MapAnsatz, params: &HashMap<String, f64>, p: (f64, f64)) -> Result<DMatrix<f64>, TransformError> {
    let (k1, k2) = (ansatz.mu1.len(), ansatz.mu2.len());
    let mut rows = DMatrix::zeros(2, k1 + k2);
    for (j, e) in ansatz.mu1.iter().enumerate() {
        rows[(0, j)] = e.compile_with_params(params)?.eval(&[p.0, p.1])?;
    }
    for (j, e) in ansatz.mu2.iter().enumerate() {
        rows[(1, k1 + j)] = e.compile_with_params(params)?.eval(&[p.0, p.1])?;
    }
    Ok(rows)
}

fn solve_affine(
    ds: &DeterminingSystem,
    ansatz: &MapAnsatz,
    params: &HashMap<String, f64>,
    opts: &MapOptions,
) -> Result<(Vec<f64>, usize), TransformError> {
    let n = ds.unknowns.len();
    let rows = ds.residuals.len().max(1);
    let n_points = opts.points.max((3 * n).div_ceil(rows));
    let sys = sample_linear_system(ds, params, PointSampler::new(opts.window, opts.seed), n_points)?;
    let c_p = lstsq(&sys.matrix, &sys.rhs, RANK_TOL);
    let scale = sys.rhs.amax().max(1.0);
    let misfit = (&sys.matrix * &c_p - &sys.rhs).amax();
    if misfit > 1e-8 * scale {
        return Err(TransformError::NoSolution { residual: misfit });
    }
    let null = nullspace(&sys.matrix, RANK_TOL);
    let mut c = c_p;
    if let (Some((at, value)), false) = (opts.pin, null.is_empty()) {
        let p = pin_rows(ansatz, params, at)?;
        let nmat = DMatrix::from_columns(&null);
        let target = DVector::from_vec(vec![value.0, value.1]) - &p * &c;
        let z = lstsq(&(&p * &nmat), &target, RANK_TOL);
        c += nmat * z;
    }
    Ok((c.iter().copied().collect(), null.len()))
}

fn solve_nonlinear(
    ds: &DeterminingSystem,
    params: &HashMap<String, f64>,
    opts: &MapOptions,
) -> Result<Vec<f64>, TransformError> {
    let n = ds.unknowns.len();
    let ev = RowEvaluator::new(ds, params)?;
    let zero = vec![0.0; n];
    let points: Vec<(f64, f64)> =
        PointSampler::new(opts.window, opts.seed).filter(|p| ev.eval(*p, &zero).is_ok()).take(opts.points).collect();
    let f = |c: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(points.len() * ds.residuals.len());
        for p in &points {
            match ev.eval(*p, c) {
                Ok(r) => out.extend(r),
                Err(_) => out.extend(std::iter::repeat_n(f64::NAN, ds.residuals.len())),
            }
        }
        out
    };
    let nice = [0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0];
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            (0..n).map(|_| nice[rng.random_range(0..nice.len())] + rng.random_range(-0.1..0.1)).collect()
        })
        .collect();
    let gn = GnOptions { max_iter: 300, tol: 1e-13 };
    let results = crate::par_map(&starts, |s| gauss_newton(f, s, &vec![true; n], &gn));
    // Smallest coefficient norm among the converged starts.
    let best = results.into_iter().filter(|r| r.residual < 1e-9).min_by(|a, b| {
        let na: f64 = a.x.iter().map(|v| v * v).sum();
        let nb: f64 = b.x.iter().map(|v| v * v).sum();
        na.total_cmp(&nb)
    });
    best.map(|r| r.x).ok_or(TransformError::NoSolution { residual: f64::INFINITY })
}

/// Solve the pair system for a map in the span of the ansatz.
///
/// Affine systems are solved by least squares; among a family of
/// solutions the smallest coefficient vector is taken, or the one
/// matching the pin when given. Other systems fall back to Gauss–Newton
/// from random starts.
pub fn solve_map(
    pairs: &PairedSymmetries,
    ansatz: &MapAnsatz,
    params: &HashMap<String, f64>,
    opts: &MapOptions,
) -> Result<MapSolution, TransformError> {
    let (symbolic, unknowns) = ansatz.symbolic();
    let ds = transformation_system(pairs, &symbolic)?.with_unknowns(unknowns);
    let (c, path, gauge_dim) = match solve_affine(&ds, ansatz, params, opts) {
        Ok((c, g)) => (c, SolvePath::Affine, g),
        Err(TransformError::Ansatz(AnsatzError::NonAffine { .. })) => {
            (solve_nonlinear(&ds, params, opts)?, SolvePath::Nonlinear, 0)
        }
        Err(e) => return Err(e),
    };
    let map = ansatz.realize(&c);
    let residual = verify(pairs, &map, params, opts)?;
    if residual > opts.verify_tol {
        return Err(TransformError::NoSolution { residual });
    }
    map.check_time_change(params, opts.window)?;
    Ok(MapSolution { map, residual, path, gauge_dim })
}

/// How far `μ` is from carrying solutions of `src` to solutions of `tgt`,
/// measured by the Itô formula: with `s = μ₁(t)`, `Y = μ₂(t, X)`,
/// `h(s,Y) μ₁_t = μ₂_t + μ₂_x f + ½ μ₂_xx g²` and `σ(s,Y)² μ₁_t = (μ₂_x g)²`.
/// The target equation is written in its own `(t, x)`.
pub fn transport_residual(
    src: &Sde,
    tgt: &Sde,
    map: &TransformMap,
    params: &HashMap<String, f64>,
    window: Window,
    n: usize,
    seed: u64,
) -> Result<f64, TransformError> {
    let to_map: HashMap<String, Expr> = [("t".to_string(), map.mu1.clone()), ("x".to_string(), map.mu2.clone())].into();
    let h = tgt.drift.substitute(&to_map);
    let sigma = tgt.diffusion.substitute(&to_map);
    let (m1t, m2t, m2x) = (map.mu1.diff("t"), map.mu2.diff("t"), map.mu2.diff("x"));
    let m2xx = m2x.diff("x");
    let drift = (h * &m1t - (m2t + &m2x * &src.drift + half() * m2xx * src.diffusion.powi(2))).simplify();
    let noise = (sigma.powi(2) * &m1t - (&m2x * &src.diffusion).powi(2)).simplify();
    let ds = DeterminingSystem::new(SystemKind::Transformation, vec![drift, noise]);
    Ok(crate::ansatz::max_residual(&ds, params, PointSampler::new(window, seed), n)?)
}

/// Parameter values of both equations; a shared name must agree.
pub fn merged_params(
    a: &HashMap<String, f64>,
    b: &HashMap<String, f64>,
) -> Result<HashMap<String, f64>, TransformError> {
    let mut out = a.clone();
    for (k, v) in b {
        match out.get(k) {
            Some(w) if w != v => return Err(TransformError::ParameterClash { name: k.clone() }),
            _ => {
                out.insert(k.clone(), *v);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Error)]
pub enum FindMapError {
    #[error("algebras do not match: {reason} (best residual {best_residual:.3e})")]
    NoMatch { best_residual: f64, reason: String },
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Clone, Debug)]
pub struct FindMapOptions {
    pub map: MapOptions,
    pub restarts: usize,
    /// Matches tried, best first, before giving up.
    pub max_candidates: usize,
}

impl Default for FindMapOptions {
    fn default() -> Self {
        FindMapOptions { map: MapOptions::default(), restarts: 64, max_candidates: 16 }
    }
}

#[derive(Clone, Debug)]
pub struct FindMapResult {
    pub source_constants: StructureConstants,
    pub target_constants: StructureConstants,
    pub matching: BasisMatch,
    pub solution: MapSolution,
    /// Itô consistency of the map with the two equations.
    pub transport: f64,
    /// Index of the accepted match in the ranked list.
    pub candidate: usize,
}

/// Match the two algebras, then solve for a map using each ranked
/// change of basis until one is consistent with both equations.
pub fn find_map(
    src: &Sde,
    src_basis: &[VectorField],
    tgt: &Sde,
    tgt_basis: &[VectorField],
    ansatz: &MapAnsatz,
    opts: &FindMapOptions,
) -> Result<FindMapResult, FindMapError> {
    let src_params = crate::ansatz::bound_params(src).map_err(TransformError::from)?;
    let tgt_params = crate::ansatz::bound_params(tgt).map_err(TransformError::from)?;
    let params = merged_params(&src_params, &tgt_params)?;
    let w = opts.map.window;
    let source_constants = structure_constants(src_basis, &src_params, w, opts.map.seed)?;
    let target_constants = structure_constants(tgt_basis, &tgt_params, w, opts.map.seed)?;
    let mut nice: Vec<f64> = params.values().copied().collect();
    nice.sort_by(f64::total_cmp);
    let outcome = match_basis(
        &source_constants,
        &target_constants,
        &MatchOptions { restarts: opts.restarts, seed: opts.map.seed, params: nice, tol: 1e-8 },
    );
    if let MatchOutcome::NoMatch { best_residual, reason } = outcome {
        return Err(FindMapError::NoMatch { best_residual, reason });
    }
    let mut fallback: Option<FindMapResult> = None;
    let mut last_err = None;
    for (idx, m) in outcome.all().into_iter().take(opts.max_candidates).enumerate() {
        let pairs = PairedSymmetries::from_bases(&m.apply(src_basis), tgt_basis);
        match solve_map(&pairs, ansatz, &params, &opts.map) {
            Ok(solution) => {
                let transport = transport_residual(src, tgt, &solution.map, &params, w, 64, opts.map.seed)?;
                let result = FindMapResult {
                    source_constants: source_constants.clone(),
                    target_constants: target_constants.clone(),
                    matching: m.clone(),
                    solution,
                    transport,
                    candidate: idx,
                };
                if transport < 1e-8 {
                    return Ok(result);
                }
                if fallback.as_ref().is_none_or(|f| f.transport > transport) {
                    fallback = Some(result);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (fallback, last_err) {
        (Some(r), _) => Ok(r),
        (None, Some(e)) => Err(e.into()),
        (None, None) => Err(TransformError::NoSolution { residual: f64::INFINITY }.into()),
    }
}
