//! Solve determining systems over a finite dictionary of candidate
//! functions.
//!
//! Each unknown coefficient function is written as `Σ c_k d_k(t,x)`. The
//! residuals are affine in the `c_k`, so evaluating them at sample points
//! gives a linear system whose nullspace is the solution space. Systems
//! with a stochastic part are solved in two stages: first the rows that
//! involve only `φ̃`, then, for each `φ̃` found, the rows for `(τ, φ)`
//! with the quadratic `φ̃²` contribution carried by an extra unknown
//! `q = s²`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use thiserror::Error;

use crate::determining::{
    classical_system, deterministic_ode_system, stochastic_system, DeterminingError, DeterminingSystem, Sde,
    VectorField,
};
use crate::expr::{snap_number, CompiledExpr, EvalError, Expr, Number, SymbolTable};
use crate::grid::{PointSampler, Window};
use crate::linalg::{lstsq, nullspace, rank, rref};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AnsatzError {
    #[error(transparent)]
    Determining(#[from] DeterminingError),
    #[error("invalid dictionary '{text}': {message}")]
    Dictionary { text: String, message: String },
    #[error("time dictionary entry {0} depends on x")]
    TauDependsOnX(String),
    #[error("{role} dictionary entries are linearly dependent on the sample grid")]
    DependentDictionary { role: &'static str },
    #[error("parameter {0} requires a value or must appear in ansatz rates")]
    UnboundParameter(String),
    #[error("mode {mode} is incompatible with the equation: {reason}")]
    IncompatibleMode { mode: Mode, reason: String },
    #[error("residual {row} is not affine in the unknown coefficients (deviation {deviation:.3e})")]
    NonAffine { row: usize, deviation: f64 },
    #[error("could not find {needed} admissible sample points: {last}")]
    Domain { needed: usize, last: String },
    #[error("generator {field} fails verification: max residual {residual:.3e}")]
    VerificationFailed { field: String, residual: f64 },
}

/// Which determining system to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Classical,
    Stochastic,
    DeterministicOde,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Classical => "classical",
            Mode::Stochastic => "stochastic",
            Mode::DeterministicOde => "det-ode",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "classical" => Ok(Mode::Classical),
            "stochastic" => Ok(Mode::Stochastic),
            "det-ode" => Ok(Mode::DeterministicOde),
            _ => Err(format!("unknown mode '{s}' (expected classical, stochastic or det-ode)")),
        }
    }
}

fn dict_error(text: &str, message: impl Into<String>) -> AnsatzError {
    AnsatzError::Dictionary { text: text.to_string(), message: message.into() }
}

/// Split on `+` outside parentheses.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            // A `+` right after an exponent marker belongs to the literal.
            '+' if depth == 0
                && !(i > 0 && matches!(bytes[i - 1], b'e' | b'E') && i > 1 && bytes[i - 2].is_ascii_digit()) =>
            {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

/// Exponent tuples of total degree ≤ d, by degree then lexicographically.
fn monomial_exponents(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(nvars: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == nvars - 1 {
            let used: u32 = prefix.iter().sum();
            let mut e = prefix.clone();
            e.push(total - used);
            out.push(e);
            return;
        }
        let used: u32 = prefix.iter().sum();
        for k in (0..=total - used).rev() {
            prefix.push(k);
            rec(nvars, total, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        rec(nvars, total, &mut Vec::new(), &mut out);
    }
    out
}

fn expand_poly(args: &str, table: &SymbolTable, text: &str) -> Result<Vec<Expr>, AnsatzError> {
    let (vars, degree) = match args.split_once(';') {
        Some((v, d)) => (v.to_string(), d.trim().to_string()),
        None => match args.rsplit_once(',') {
            Some((v, d)) => (v.to_string(), d.trim().to_string()),
            None => return Err(dict_error(text, "poly needs a degree, as in poly(t,1) or poly(t,x;2)")),
        },
    };
    let degree: u32 = degree.parse().map_err(|_| dict_error(text, format!("bad degree '{degree}'")))?;
    let vars: Vec<String> = vars.split(',').map(|v| v.trim().to_string()).collect();
    for v in &vars {
        if !table.is_variable(v) {
            return Err(dict_error(text, format!("'{v}' is not a variable")));
        }
    }
    Ok(monomial_exponents(vars.len(), degree)
        .into_iter()
        .map(|exps| Expr::product(vars.iter().zip(exps).map(|(v, k)| Expr::var(v).powi(k as i64)).collect()).simplify())
        .collect())
}

/// Parse a dictionary such as `poly(t,x;1) + exp(a*t)*poly(x,1) + exp(2*t)`.
///
/// Top-level `+` separates entries. `poly(vars;d)` (or `poly(v,d)`) stands
/// for every monomial of total degree ≤ d, times the surrounding factors.
/// An empty string or `0` gives the empty dictionary.
pub fn parse_dictionary(text: &str, table: &SymbolTable) -> Result<Vec<Expr>, AnsatzError> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "0" {
        return Ok(Vec::new());
    }
    let mut entries = Vec::new();
    for term in split_top_level(trimmed) {
        let term = term.trim();
        if term.is_empty() {
            return Err(dict_error(text, "empty entry"));
        }
        let Some(start) = term.find("poly(") else {
            let e = table.parse(term).map_err(|e| dict_error(text, e.to_string()))?;
            entries.push(e.simplify());
            continue;
        };
        let open = start + "poly".len();
        let mut depth = 0;
        let mut close = None;
        for (i, c) in term[open..].char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(open + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let close = close.ok_or_else(|| dict_error(text, "unbalanced parentheses in poly"))?;
        let monomials = expand_poly(&term[open + 1..close], table, text)?;
        let prefix = term[..start].trim();
        let suffix = term[close + 1..].trim();
        let prefix = match prefix.strip_suffix('*') {
            Some(p) => p.trim(),
            None if prefix.is_empty() => "",
            None => return Err(dict_error(text, "poly must be joined to other factors by '*'")),
        };
        let suffix = match suffix.strip_prefix('*') {
            Some(s) => s.trim(),
            None if suffix.is_empty() => "",
            None => return Err(dict_error(text, "poly must be joined to other factors by '*'")),
        };
        if prefix.contains("poly(") || suffix.contains("poly(") {
            return Err(dict_error(text, "at most one poly per entry"));
        }
        let mut factor = Expr::one();
        for part in [prefix, suffix] {
            if !part.is_empty() {
                factor = factor * table.parse(part).map_err(|e| dict_error(text, e.to_string()))?;
            }
        }
        entries.extend(monomials.into_iter().map(|m| (&factor * &m).simplify()));
    }
    Ok(entries)
}

/// Candidate functions for each coefficient of a generator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ansatz {
    pub tau: Vec<Expr>,
    pub phi: Vec<Expr>,
    pub phi_s: Vec<Expr>,
}

impl Ansatz {
    pub fn new(tau: Vec<Expr>, phi: Vec<Expr>, phi_s: Vec<Expr>) -> Self {
        Ansatz { tau, phi, phi_s }
    }

    pub fn parse(tau: &str, phi: &str, phi_s: &str, table: &SymbolTable) -> Result<Self, AnsatzError> {
        Ok(Ansatz::new(parse_dictionary(tau, table)?, parse_dictionary(phi, table)?, parse_dictionary(phi_s, table)?))
    }

    pub fn len(&self) -> usize {
        self.tau.len() + self.phi.len() + self.phi_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Sample points used to assemble each linear system.
    pub points: usize,
    pub window: Window,
    pub seed: u64,
    /// Relative singular-value cutoff.
    pub rank_tol: f64,
    /// Max residual allowed at the fresh verification points.
    pub verify_tol: f64,
    pub verify_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            points: 64,
            window: Window::default(),
            seed: 0,
            rank_tol: crate::linalg::RANK_TOL,
            verify_tol: 1e-8,
            verify_points: 100,
        }
    }
}

/// Index of the first verification point in the quasi-random stream, far
/// beyond any assembly set.
pub const VERIFY_OFFSET: u64 = 1 << 20;

/// `M c = rhs` at the solution, one row per (point, residual).
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub points: Vec<(f64, f64)>,
}

/// Matrix rows and right-hand side contributed by one sample point.
type Block = (Vec<Vec<f64>>, Vec<f64>);

/// Residuals compiled over `[t, x, params…, unknowns…]`.
pub(crate) struct RowEvaluator {
    rows: Vec<CompiledExpr>,
    base: Vec<f64>,
    n_unknowns: usize,
}

impl RowEvaluator {
    pub(crate) fn new(ds: &DeterminingSystem, params: &HashMap<String, f64>) -> Result<Self, AnsatzError> {
        let mut names: Vec<&str> = params.keys().map(String::as_str).collect();
        names.sort_unstable();
        let mut slots = vec!["t", "x"];
        slots.extend(&names);
        slots.extend(ds.unknowns.iter().map(String::as_str));
        let mut base = vec![0.0, 0.0];
        base.extend(names.iter().map(|n| params[*n]));
        base.extend(std::iter::repeat_n(0.0, ds.unknowns.len()));
        let mut rows = Vec::with_capacity(ds.residuals.len());
        for r in &ds.residuals {
            let c = CompiledExpr::new(r, &slots).map_err(|e| match e {
                EvalError::Unbound(s) => AnsatzError::UnboundParameter(s),
                other => AnsatzError::Domain { needed: 0, last: other.to_string() },
            })?;
            rows.push(c);
        }
        Ok(RowEvaluator { rows, base, n_unknowns: ds.unknowns.len() })
    }

    /// Residual values at a point for the given unknown values.
    pub(crate) fn eval(&self, p: (f64, f64), c: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut v = self.base.clone();
        v[0] = p.0;
        v[1] = p.1;
        let off = v.len() - self.n_unknowns;
        v[off..].copy_from_slice(c);
        self.rows.iter().map(|r| r.eval(&v)).collect()
    }

    /// Columns `r(e_k) − r(0)` and `−r(0)` at one point, after checking
    /// that the residuals are affine there.
    fn block(&self, p: (f64, f64)) -> Result<Result<Block, AnsatzError>, EvalError> {
        let n = self.n_unknowns;
        let mut c = vec![0.0; n];
        let r0 = self.eval(p, &c)?;
        let mut cols = Vec::with_capacity(n);
        for k in 0..n {
            c[k] = 1.0;
            let rk = self.eval(p, &c)?;
            c[k] = 0.0;
            cols.push(rk.iter().zip(&r0).map(|(a, b)| a - b).collect::<Vec<_>>());
        }
        if n > 0 {
            let u: Vec<f64> = (0..n).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
            let w: Vec<f64> = (0..n).map(|k| ((k * 5 + 1) % 13) as f64 / 6.0 - 0.8).collect();
            let uw: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
            let (ru, rw, ruw) = (self.eval(p, &u)?, self.eval(p, &w)?, self.eval(p, &uw)?);
            for (row, r0v) in r0.iter().enumerate() {
                let predicted = |x: &[f64]| r0v + (0..n).map(|k| x[k] * cols[k][row]).sum::<f64>();
                let scale = 1.0 + ru[row].abs() + rw[row].abs() + r0v.abs();
                let dev = (ruw[row] - predicted(&uw))
                    .abs()
                    .max((ru[row] - predicted(&u)).abs())
                    .max((rw[row] - predicted(&w)).abs());
                if dev > 1e-8 * scale {
                    return Ok(Err(AnsatzError::NonAffine { row, deviation: dev }));
                }
            }
        }
        Ok(Ok((cols, r0.iter().map(|v| -v).collect())))
    }
}

fn stack(blocks: Vec<(Vec<Vec<f64>>, Vec<f64>)>, n: usize, rows: usize) -> (DMatrix<f64>, DVector<f64>) {
    let m = blocks.len() * rows;
    let mut matrix = DMatrix::zeros(m, n);
    let mut rhs = DVector::zeros(m);
    for (b, (cols, r)) in blocks.into_iter().enumerate() {
        for i in 0..rows {
            rhs[b * rows + i] = r[i];
            for (k, col) in cols.iter().enumerate() {
                matrix[(b * rows + i, k)] = col[i];
            }
        }
    }
    (matrix, rhs)
}

/// Evaluate an affine system at the given points.
///
/// Fails on the first point where a residual cannot be evaluated, or
/// where a residual is not affine in the unknowns.
pub fn build_linear_system(
    ds: &DeterminingSystem,
    points: &[(f64, f64)],
    params: &HashMap<String, f64>,
) -> Result<LinearSystem, AnsatzError> {
    let ev = RowEvaluator::new(ds, params)?;
    let results = crate::par_map(points, |p| ev.block(*p));
    let mut blocks = Vec::with_capacity(points.len());
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(b) => blocks.push(b?),
            Err(e) => return Err(AnsatzError::Domain { needed: points.len(), last: format!("{e} at {p:?}") }),
        }
    }
    let (matrix, rhs) = stack(blocks, ds.unknowns.len(), ds.residuals.len());
    Ok(LinearSystem { matrix, rhs, points: points.to_vec() })
}

/// Like [`build_linear_system`], drawing points from a sampler and
/// rejecting any at which a residual cannot be evaluated.
pub fn sample_linear_system(
    ds: &DeterminingSystem,
    params: &HashMap<String, f64>,
    sampler: PointSampler,
    n_points: usize,
) -> Result<LinearSystem, AnsatzError> {
    let ev = RowEvaluator::new(ds, params)?;
    let mut sampler = sampler;
    let mut blocks = Vec::with_capacity(n_points);
    let mut points = Vec::with_capacity(n_points);
    let mut drawn = 0;
    let mut last = String::new();
    while points.len() < n_points {
        if drawn > 50 * n_points.max(1) {
            return Err(AnsatzError::Domain { needed: n_points, last });
        }
        let need = n_points - points.len();
        let batch: Vec<(f64, f64)> = sampler.by_ref().take(need).collect();
        drawn += need;
        for (p, r) in batch.iter().zip(crate::par_map(&batch, |p| ev.block(*p))) {
            match r {
                Ok(b) => {
                    blocks.push(b?);
                    points.push(*p);
                }
                Err(e) => last = format!("{e} at {p:?}"),
            }
        }
    }
    let (matrix, rhs) = stack(blocks, ds.unknowns.len(), ds.residuals.len());
    Ok(LinearSystem { matrix, rhs, points })
}

/// Max residual of a concrete system over `n` admissible points.
pub fn max_residual(
    ds: &DeterminingSystem,
    params: &HashMap<String, f64>,
    sampler: PointSampler,
    n: usize,
) -> Result<f64, AnsatzError> {
    let sys = sample_linear_system(&ds.clone().with_unknowns(Vec::new()), params, sampler, n)?;
    Ok(sys.rhs.amax())
}

/// One solved generator with its coefficients in dictionary order
/// `[τ…, φ…, φ̃…]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub field: VectorField,
    pub coefficients: Vec<f64>,
    /// Max residual at the verification points.
    pub residual: f64,
}

impl Generator {
    /// Field rescaled to clear rational denominators, as in `2t∂t + x∂x`.
    ///
    /// Generators carrying both a deterministic and a stochastic part are
    /// returned unchanged: rescaling would not commute with the `φ̃²` term.
    pub fn display_field(&self) -> VectorField {
        let mixed = !self.field.is_deterministic() && !(self.field.tau.is_zero() && self.field.phi.is_zero());
        if mixed {
            return self.field.clone();
        }
        let mut lcm: i64 = 1;
        for c in &self.coefficients {
            match snap_number(*c, 1e-9) {
                Number::Rational(r) => lcm = lcm.lcm(r.denom()),
                Number::Float(_) => return self.field.clone(),
            }
        }
        if lcm == 1 {
            self.field.clone()
        } else {
            self.field.scale(&Expr::int(lcm))
        }
    }
}

/// Solution space of a determining system over a dictionary.
#[derive(Clone, Debug)]
pub struct SymmetryBasis {
    pub mode: Mode,
    pub generators: Vec<Generator>,
    /// Restrictions applied while solving, for the report.
    pub notes: Vec<String>,
    pub params: HashMap<String, f64>,
}

impl SymmetryBasis {
    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn fields(&self) -> Vec<VectorField> {
        self.generators.iter().map(|g| g.field.clone()).collect()
    }

    /// Generators without a stochastic part.
    pub fn deterministic(&self) -> Vec<VectorField> {
        self.generators.iter().filter(|g| g.field.is_deterministic()).map(|g| g.field.clone()).collect()
    }

    /// How well `v` lies in the span: max-abs least-squares residual of its
    /// `(τ, φ, φ̃)` values against the basis fields on `n` points.
    pub fn span_residual(&self, v: &VectorField, window: Window, n: usize, seed: u64) -> Result<f64, EvalError> {
        span_residual(&self.fields(), v, &self.params, window, n, seed)
    }
}

fn field_values(v: &VectorField, p: (f64, f64), params: &HashMap<String, f64>) -> Result<[f64; 3], EvalError> {
    let look = |n: &str| match n {
        "t" => Some(p.0),
        "x" => Some(p.1),
        _ => params.get(n).copied(),
    };
    Ok([v.tau.eval_with(&look)?, v.phi.eval_with(&look)?, v.phi_s.eval_with(&look)?])
}

/// Max-abs residual of expressing `v` in the span of `basis` on a grid.
pub fn span_residual(
    basis: &[VectorField],
    v: &VectorField,
    params: &HashMap<String, f64>,
    window: Window,
    n: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    let points = crate::grid::sample_points(window, n, seed);
    let mut a = DMatrix::zeros(3 * n, basis.len());
    let mut b = DVector::zeros(3 * n);
    for (i, p) in points.iter().enumerate() {
        let target = field_values(v, *p, params)?;
        for c in 0..3 {
            b[3 * i + c] = target[c];
        }
        for (j, f) in basis.iter().enumerate() {
            let vals = field_values(f, *p, params)?;
            for c in 0..3 {
                a[(3 * i + c, j)] = vals[c];
            }
        }
    }
    if basis.is_empty() {
        return Ok(b.amax());
    }
    let coef = lstsq(&a, &b, 1e-12);
    Ok((a * coef - b).amax())
}

fn coefficient_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("_{prefix}{k}")).collect()
}

fn expand(dict: &[Expr], names: &[String]) -> Expr {
    Expr::sum(dict.iter().zip(names).map(|(d, n)| Expr::param(n) * d.clone()).collect())
}

fn combine(dict: &[Expr], weights: &[f64]) -> Expr {
    let mut terms = Vec::new();
    for (d, w) in dict.iter().zip(weights) {
        let w = snap_number(*w, 1e-9);
        if !w.is_zero() {
            terms.push(Expr::constant(w) * d.clone());
        }
    }
    Expr::sum(terms).simplify()
}

fn snapped(v: &[f64]) -> Vec<f64> {
    v.iter().map(|w| snap_number(*w, 1e-9).to_f64()).map(|w| if w == 0.0 { 0.0 } else { w }).collect()
}

fn check_dictionary(
    role: &'static str,
    dict: &[Expr],
    params: &HashMap<String, f64>,
    opts: &SolverOptions,
) -> Result<(), AnsatzError> {
    if dict.is_empty() {
        return Ok(());
    }
    let names = coefficient_names("g", dict.len());
    let ds = DeterminingSystem::new(crate::determining::SystemKind::Classical, vec![expand(dict, &names)])
        .with_unknowns(names);
    let n = opts.points.max(3 * dict.len());
    let sys = sample_linear_system(&ds, params, PointSampler::new(opts.window, opts.seed), n)?;
    if rank(&sys.matrix, opts.rank_tol) < dict.len() {
        return Err(AnsatzError::DependentDictionary { role });
    }
    Ok(())
}

fn rows_for(mode: Mode, sde: &Sde, v: &VectorField, rows: &[usize]) -> Result<DeterminingSystem, AnsatzError> {
    let ds = match mode {
        Mode::Classical => classical_system(sde, v)?,
        Mode::Stochastic => stochastic_system(sde, v)?,
        Mode::DeterministicOde => deterministic_ode_system(sde, v)?,
    };
    Ok(if rows.is_empty() { ds } else { ds.select(rows) })
}

fn solve_nullspace(
    ds: &DeterminingSystem,
    params: &HashMap<String, f64>,
    opts: &SolverOptions,
) -> Result<Vec<DVector<f64>>, AnsatzError> {
    let n_unknowns = ds.unknowns.len();
    if n_unknowns == 0 {
        return Ok(Vec::new());
    }
    let rows = ds.residuals.len().max(1);
    let n_points = opts.points.max((3 * n_unknowns).div_ceil(rows));
    let sys = sample_linear_system(ds, params, PointSampler::new(opts.window, opts.seed), n_points)?;
    Ok(nullspace(&sys.matrix, opts.rank_tol))
}

/// Resolve the requested mode against the equation.
pub fn effective_mode(sde: &Sde, mode: Mode) -> Result<Mode, AnsatzError> {
    match mode {
        Mode::DeterministicOde if !sde.is_deterministic() => Err(AnsatzError::IncompatibleMode {
            mode,
            reason: format!("diffusion {} is not identically zero", sde.diffusion),
        }),
        Mode::Stochastic if sde.is_deterministic() => Ok(Mode::DeterministicOde),
        m => Ok(m),
    }
}

/// Check an equation's parameters are all bound and return their values.
pub fn bound_params(sde: &Sde) -> Result<HashMap<String, f64>, AnsatzError> {
    sde.validate()?;
    if let Some(p) = sde.unbound_params().into_iter().next() {
        return Err(AnsatzError::UnboundParameter(p));
    }
    Ok(sde.param_values())
}

/// Solve for all generators in the span of the dictionary.
pub fn solve_symmetries(
    sde: &Sde,
    ansatz: &Ansatz,
    mode: Mode,
    opts: &SolverOptions,
) -> Result<SymmetryBasis, AnsatzError> {
    let params = bound_params(sde)?;
    let mode = effective_mode(sde, mode)?;
    for d in &ansatz.tau {
        if d.depends_on("x") {
            return Err(AnsatzError::TauDependsOnX(d.to_string()));
        }
    }
    check_dictionary("tau", &ansatz.tau, &params, opts)?;
    check_dictionary("phi", &ansatz.phi, &params, opts)?;
    let stochastic = mode != Mode::Classical && !ansatz.phi_s.is_empty();
    if stochastic {
        check_dictionary("phi_s", &ansatz.phi_s, &params, opts)?;
    }
    let (n_tau, n_phi, n_s) = (ansatz.tau.len(), ansatz.phi.len(), ansatz.phi_s.len());
    let a_names = coefficient_names("a", n_tau);
    let b_names = coefficient_names("b", n_phi);
    let mut det_unknowns = a_names.clone();
    det_unknowns.extend(b_names.iter().cloned());
    let det_field = VectorField::deterministic(expand(&ansatz.tau, &a_names), expand(&ansatz.phi, &b_names));
    let (det_rows, noise_rows): (&[usize], &[usize]) = match mode {
        Mode::Classical => (&[], &[]),
        Mode::Stochastic => (&[0, 2], &[1, 3]),
        Mode::DeterministicOde => (&[0], &[1]),
    };

    let base = rows_for(mode, sde, &det_field, det_rows)?.with_unknowns(det_unknowns.clone());
    let det_null = solve_nullspace(&base, &params, opts)?;
    let det_vectors = rref(&det_null);
    let mut notes = Vec::new();
    let mut candidates: Vec<(VectorField, Vec<f64>)> = Vec::new();
    for v in &det_vectors {
        let w = snapped(v.as_slice());
        let field = VectorField::deterministic(combine(&ansatz.tau, &w[..n_tau]), combine(&ansatz.phi, &w[n_tau..]));
        let mut coefficients = w;
        coefficients.extend(std::iter::repeat_n(0.0, n_s));
        candidates.push((field, coefficients));
    }

    if stochastic {
        let c_names = coefficient_names("c", n_s);
        let noise_field = VectorField::stochastic(expand(&ansatz.phi_s, &c_names));
        let stage1 = rows_for(mode, sde, &noise_field, noise_rows)?.with_unknowns(c_names);
        let stage1_vectors = rref(&solve_nullspace(&stage1, &params, opts)?);
        if stage1_vectors.len() >= 2 {
            notes.push(format!(
                "stochastic parts form a {}-dimensional space; each basis element was combined with (tau, phi) separately",
                stage1_vectors.len()
            ));
        }
        for w in &stage1_vectors {
            let ws = snapped(w.as_slice());
            let phi_s = combine(&ansatz.phi_s, &ws);
            let quad = rows_for(mode, sde, &VectorField::stochastic(phi_s.clone()), det_rows)?;
            let q = Expr::param("_q");
            let residuals =
                base.residuals.iter().zip(&quad.residuals).map(|(r, qr)| (r + &(&q * qr)).simplify()).collect();
            let mut unknowns = det_unknowns.clone();
            unknowns.push("_q".to_string());
            let ds = DeterminingSystem::new(base.kind, residuals).with_unknowns(unknowns);
            let null = solve_nullspace(&ds, &params, opts)?;
            let qi = det_unknowns.len();
            let Some(best) = null.iter().max_by(|a, b| a[qi].abs().total_cmp(&b[qi].abs())) else {
                continue;
            };
            if best[qi].abs() <= 1e-9 {
                notes.push(format!("stochastic part {phi_s} admits no compensating deterministic part"));
                continue;
            }
            // Normalize q = s² = 1 and drop the component already in the
            // deterministic solution space.
            let mut ab: DVector<f64> = best.rows(0, qi).into_owned() / best[qi];
            for d in &det_null {
                let k = d.dot(&ab);
                ab -= d * k;
            }
            let ab = snapped(ab.as_slice());
            if ab.iter().any(|v| *v != 0.0) {
                notes.push(format!("stochastic part {phi_s} is coupled to a deterministic part through its square"));
            }
            let field = VectorField::new(combine(&ansatz.tau, &ab[..n_tau]), combine(&ansatz.phi, &ab[n_tau..]), phi_s);
            let mut coefficients = ab;
            coefficients.extend(ws);
            candidates.push((field, coefficients));
        }
    }

    let mut generators = Vec::with_capacity(candidates.len());
    for (field, coefficients) in candidates {
        let ds = rows_for(mode, sde, &field, &[])?;
        let sampler = PointSampler::new(opts.window, opts.seed).starting_at(VERIFY_OFFSET);
        let residual = max_residual(&ds, &params, sampler, opts.verify_points)?;
        if residual > opts.verify_tol {
            return Err(AnsatzError::VerificationFailed { field: field.to_string(), residual });
        }
        generators.push(Generator { field, coefficients, residual });
    }
    Ok(SymmetryBasis { mode, generators, notes, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SymbolTable {
        SymbolTable::new().with_params(["a", "b"])
    }

    #[test]
    fn poly_expansion() {
        let d = parse_dictionary("poly(t,x;1) + exp(a*t)*poly(x,1)", &table()).unwrap();
        let shown: Vec<String> = d.iter().map(|e| e.to_string()).collect();
        assert_eq!(shown, ["1", "t", "x", "exp(a*t)", "x*exp(a*t)"]);
        assert_eq!(parse_dictionary("poly(t,2)", &table()).unwrap().len(), 3);
        assert_eq!(parse_dictionary("poly(t,x;2)", &table()).unwrap().len(), 6);
        assert!(parse_dictionary("", &table()).unwrap().is_empty());
        assert_eq!(parse_dictionary("1 + exp(2*t)", &table()).unwrap().len(), 2);
    }

    #[test]
    fn malformed_dictionaries() {
        for bad in ["poly(t)", "poly(t,x;q)", "poly(a,1)", "2 poly(t,1)", "x +", "poly(t,1)*poly(x,1)"] {
            assert!(matches!(parse_dictionary(bad, &table()), Err(AnsatzError::Dictionary { .. })), "{bad}");
        }
    }

    #[test]
    fn mode_round_trip() {
        for m in [Mode::Classical, Mode::Stochastic, Mode::DeterministicOde] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("quantum".parse::<Mode>().is_err());
    }

    #[test]
    fn empty_ansatz_gives_empty_basis() {
        let sde = Sde::parse("0", "1", &[]).unwrap();
        let basis = solve_symmetries(&sde, &Ansatz::default(), Mode::Stochastic, &SolverOptions::default()).unwrap();
        assert_eq!(basis.dim(), 0);
        let ds = DeterminingSystem::new(crate::determining::SystemKind::Classical, vec![Expr::var("x")]);
        let sys = build_linear_system(&ds, &[(1.0, 1.0)], &HashMap::new()).unwrap();
        assert_eq!(sys.matrix.ncols(), 0);
        assert!(nullspace(&sys.matrix, 1e-9).is_empty());
    }

    #[test]
    fn quadratic_term_is_detected() {
        let ds = DeterminingSystem::new(
            crate::determining::SystemKind::Classical,
            vec![Expr::param("_c0") * Expr::param("_c0") * Expr::var("x")],
        )
        .with_unknowns(vec!["_c0".into()]);
        let err = build_linear_system(&ds, &[(1.0, 1.0)], &HashMap::new()).unwrap_err();
        assert!(matches!(err, AnsatzError::NonAffine { row: 0, .. }));
    }

    #[test]
    fn dependent_and_x_dependent_dictionaries_are_rejected() {
        let sde = Sde::parse("0", "1", &[]).unwrap();
        let t = table();
        let opts = SolverOptions::default();
        let dup = Ansatz::parse("t + 2*t", "", "", &t).unwrap();
        assert_eq!(
            solve_symmetries(&sde, &dup, Mode::Classical, &opts).unwrap_err(),
            AnsatzError::DependentDictionary { role: "tau" }
        );
        let xt = Ansatz::parse("x", "", "", &t).unwrap();
        assert!(matches!(solve_symmetries(&sde, &xt, Mode::Classical, &opts), Err(AnsatzError::TauDependsOnX(_))));
    }

    #[test]
    fn unbound_parameter_and_incompatible_mode() {
        let sde = Sde::parse("a*x", "1", &[]);
        assert!(sde.is_err());
        let table = SymbolTable::new().with_params(["a"]);
        let sde = Sde::new(table.parse("a*x").unwrap(), Expr::one()).declare_param("a");
        let err = solve_symmetries(&sde, &Ansatz::default(), Mode::Classical, &SolverOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "parameter a requires a value or must appear in ansatz rates");
        let brownian = Sde::parse("0", "1", &[]).unwrap();
        assert!(matches!(
            solve_symmetries(&brownian, &Ansatz::default(), Mode::DeterministicOde, &SolverOptions::default()),
            Err(AnsatzError::IncompatibleMode { .. })
        ));
    }

    #[test]
    fn langevin_stage_one_forces_exponential() {
        let sde = Sde::parse("a*x", "b", &[("a", 1.0), ("b", 1.0)]).unwrap();
        let a = Ansatz::parse("", "", "1 + x + exp(a*t)", &sde.symbols()).unwrap();
        let basis = solve_symmetries(&sde, &a, Mode::Stochastic, &SolverOptions::default()).unwrap();
        assert_eq!(basis.dim(), 1);
        assert_eq!(basis.generators[0].field.to_string(), "[exp(a*t)∂x]^S");
    }

    #[test]
    fn denominators_are_cleared_for_display() {
        let sde = Sde::parse("0", "1", &[]).unwrap();
        let a = Ansatz::parse("poly(t,1)", "poly(x,1)", "", &sde.symbols()).unwrap();
        let basis = solve_symmetries(&sde, &a, Mode::Classical, &SolverOptions::default()).unwrap();
        let shown: Vec<String> = basis.generators.iter().map(|g| g.display_field().to_string()).collect();
        assert_eq!(shown, ["[∂t]^D", "[2*t∂t + x∂x]^D", "[∂x]^D"]);
    }
}
