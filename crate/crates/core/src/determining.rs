//! Determining equations for symmetry generators of a scalar Itô SDE
//! `dX = f(t,X) dt + g(t,X) dW`.
//!
//! Three systems are built: the classical pair for deterministic
//! generators, the four-row system for generators with a stochastic
//! spatial part, and its two-row reduction for ordinary differential
//! equations (`g = 0`). Every residual vanishes exactly when the field is
//! a solution.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::expr::{Expr, SymbolTable};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DeterminingError {
    #[error("time coefficient depends on x: {0}")]
    TauDependsOnX(String),
    #[error("classical system requires a zero stochastic part, got {0}")]
    StochasticPartPresent(String),
    #[error("deterministic-ODE system requires zero diffusion, got {0}")]
    NonzeroDiffusion(String),
    #[error("{role} mentions '{symbol}', which is neither t, x nor a declared parameter")]
    UndeclaredSymbol { role: &'static str, symbol: String },
}

/// Scalar Itô SDE with named parameters.
#[derive(Clone, Debug)]
pub struct Sde {
    pub drift: Expr,
    pub diffusion: Expr,
    /// Parameter declarations; `None` means declared without a value.
    pub params: BTreeMap<String, Option<f64>>,
}

impl Sde {
    pub fn new(drift: Expr, diffusion: Expr) -> Self {
        Sde { drift, diffusion, params: BTreeMap::new() }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), Some(value));
        self
    }

    pub fn declare_param(mut self, name: &str) -> Self {
        self.params.insert(name.to_string(), None);
        self
    }

    /// Parse both coefficients against the declared parameters.
    pub fn parse(drift: &str, diffusion: &str, params: &[(&str, f64)]) -> Result<Self, crate::expr::ParseError> {
        let table = SymbolTable::new().with_params(params.iter().map(|(n, _)| *n));
        let mut sde = Sde::new(table.parse(drift)?, table.parse(diffusion)?);
        for (n, v) in params {
            sde.params.insert(n.to_string(), Some(*v));
        }
        Ok(sde)
    }

    pub fn symbols(&self) -> SymbolTable {
        SymbolTable::new().with_params(self.params.keys().cloned())
    }

    /// Parameter values for numeric evaluation (declared-without-value are skipped).
    pub fn param_values(&self) -> HashMap<String, f64> {
        self.params.iter().filter_map(|(k, v)| v.map(|v| (k.clone(), v))).collect()
    }

    /// Names of parameters that were declared without a value.
    pub fn unbound_params(&self) -> Vec<String> {
        self.params.iter().filter(|(_, v)| v.is_none()).map(|(k, _)| k.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), DeterminingError> {
        for (role, e) in [("drift", &self.drift), ("diffusion", &self.diffusion)] {
            for s in e.symbols() {
                if s != "t" && s != "x" && !self.params.contains_key(&s) {
                    return Err(DeterminingError::UndeclaredSymbol { role, symbol: s });
                }
            }
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.diffusion.simplify().is_zero()
    }
}

/// Generator `[tau ∂t + phi ∂x]^D + [phi_s ∂x]^S`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub tau: Expr,
    pub phi: Expr,
    /// Stochastic spatial coefficient.
    pub phi_s: Expr,
}

impl VectorField {
    pub fn new(tau: Expr, phi: Expr, phi_s: Expr) -> Self {
        VectorField { tau, phi, phi_s }
    }

    pub fn deterministic(tau: Expr, phi: Expr) -> Self {
        VectorField::new(tau, phi, Expr::zero())
    }

    pub fn stochastic(phi_s: Expr) -> Self {
        VectorField::new(Expr::zero(), Expr::zero(), phi_s)
    }

    pub fn zero() -> Self {
        VectorField::new(Expr::zero(), Expr::zero(), Expr::zero())
    }

    pub fn parse(tau: &str, phi: &str, phi_s: &str, table: &SymbolTable) -> Result<Self, crate::expr::ParseError> {
        Ok(VectorField::new(table.parse(tau)?, table.parse(phi)?, table.parse(phi_s)?))
    }

    pub fn is_deterministic(&self) -> bool {
        self.phi_s.simplify().is_zero()
    }

    pub fn simplify(&self) -> Self {
        VectorField::new(self.tau.simplify(), self.phi.simplify(), self.phi_s.simplify())
    }

    pub fn scale(&self, k: &Expr) -> Self {
        VectorField::new(k * &self.tau, k * &self.phi, k * &self.phi_s).simplify()
    }

    pub fn add(&self, other: &VectorField) -> Self {
        VectorField::new(&self.tau + &other.tau, &self.phi + &other.phi, &self.phi_s + &other.phi_s).simplify()
    }

    /// `Σ w_i v_i` with numeric weights.
    pub fn combination(weights: &[f64], fields: &[VectorField]) -> Self {
        let mut tau = Vec::new();
        let mut phi = Vec::new();
        let mut phi_s = Vec::new();
        for (w, f) in weights.iter().zip(fields) {
            if *w == 0.0 {
                continue;
            }
            let k = Expr::constant(crate::expr::snap_number(*w, 1e-12));
            tau.push(&k * &f.tau);
            phi.push(&k * &f.phi);
            phi_s.push(&k * &f.phi_s);
        }
        VectorField::new(Expr::sum(tau), Expr::sum(phi), Expr::sum(phi_s)).simplify()
    }

    /// Rename `(t, x)` to `(s, y)`, the coordinates of a target equation.
    pub fn to_target_coordinates(&self) -> Self {
        let b: HashMap<String, Expr> = [("t".to_string(), Expr::var("s")), ("x".to_string(), Expr::var("y"))].into();
        VectorField::new(self.tau.substitute(&b), self.phi.substitute(&b), self.phi_s.substitute(&b))
    }

    fn check_tau(&self) -> Result<(), DeterminingError> {
        if !self.tau.diff("x").is_zero() {
            return Err(DeterminingError::TauDependsOnX(self.tau.to_string()));
        }
        Ok(())
    }
}

fn part(e: &Expr) -> String {
    let s = e.to_string();
    if matches!(e.node(), crate::expr::Node::Sum(_)) {
        format!("({s})")
    } else {
        s
    }
}

fn axis_term(coef: &Expr, axis: &str) -> Option<String> {
    if coef.is_zero() {
        return None;
    }
    if coef.is_one() {
        return Some(axis.to_string());
    }
    Some(format!("{}{axis}", part(coef)))
}

impl fmt::Display for VectorField {
    /// Prints in the `[τ∂t + φ∂x]^D + [φ̃∂x]^S` notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.simplify();
        let det: Vec<String> = [axis_term(&v.tau, "∂t"), axis_term(&v.phi, "∂x")].into_iter().flatten().collect();
        let sto = axis_term(&v.phi_s, "∂x");
        match (det.is_empty(), sto) {
            (true, None) => write!(f, "0"),
            (false, None) => write!(f, "[{}]^D", det.join(" + ")),
            (true, Some(s)) => write!(f, "[{s}]^S"),
            (false, Some(s)) => write!(f, "[{}]^D + [{s}]^S", det.join(" + ")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Classical,
    Stochastic,
    DeterministicOde,
    Transformation,
}

/// Residual expressions; a field solves the system when all vanish.
#[derive(Clone, Debug)]
pub struct DeterminingSystem {
    pub kind: SystemKind,
    pub residuals: Vec<Expr>,
    /// Coefficient symbols the residuals are solved for (empty for a concrete field).
    pub unknowns: Vec<String>,
}

impl DeterminingSystem {
    pub fn new(kind: SystemKind, residuals: Vec<Expr>) -> Self {
        DeterminingSystem { kind, residuals, unknowns: Vec::new() }
    }

    pub fn with_unknowns(mut self, unknowns: Vec<String>) -> Self {
        self.unknowns = unknowns;
        self
    }

    /// True when every residual simplifies to the zero constant.
    pub fn is_identically_zero(&self) -> bool {
        self.residuals.iter().all(Expr::is_zero)
    }

    pub fn select(&self, rows: &[usize]) -> DeterminingSystem {
        DeterminingSystem {
            kind: self.kind,
            residuals: rows.iter().map(|&i| self.residuals[i].clone()).collect(),
            unknowns: self.unknowns.clone(),
        }
    }

    /// Plug numeric values into the unknowns.
    pub fn bind(&self, values: &HashMap<String, Expr>) -> DeterminingSystem {
        DeterminingSystem {
            kind: self.kind,
            residuals: self.residuals.iter().map(|r| r.substitute(values).simplify()).collect(),
            unknowns: self.unknowns.iter().filter(|u| !values.contains_key(*u)).cloned().collect(),
        }
    }
}

struct Partials {
    f: Expr,
    f_t: Expr,
    f_x: Expr,
    f_xx: Expr,
    g: Expr,
    g_t: Expr,
    g_x: Expr,
    g_xx: Expr,
}

impl Partials {
    fn of(sde: &Sde) -> Self {
        let f = sde.drift.simplify();
        let g = sde.diffusion.simplify();
        let f_x = f.diff("x");
        let g_x = g.diff("x");
        Partials { f_t: f.diff("t"), f_xx: f_x.diff("x"), g_t: g.diff("t"), g_xx: g_x.diff("x"), f, f_x, g, g_x }
    }
}

fn half() -> Expr {
    Expr::ratio(1, 2)
}

/// `f_t τ + τ_t f + f_x φ + ½ f_xx φ̃² − φ_t − φ_x f − ½ φ_xx g²`
fn drift_row(p: &Partials, v: &VectorField, with_noise: bool) -> Expr {
    let tau_t = v.tau.diff("t");
    let phi_t = v.phi.diff("t");
    let phi_x = v.phi.diff("x");
    let mut terms = vec![
        &p.f_t * &v.tau,
        &tau_t * &p.f,
        &p.f_x * &v.phi,
        half() * &p.f_xx * v.phi_s.powi(2),
        -phi_t,
        -(phi_x * &p.f),
    ];
    if with_noise {
        terms.push(-(half() * v.phi.diff("x").diff("x") * p.g.powi(2)));
    }
    Expr::sum(terms).simplify()
}

/// `f_x φ̃ − φ̃_t − φ̃_x f − ½ φ̃_xx g²`
fn drift_noise_row(p: &Partials, v: &VectorField, with_noise: bool) -> Expr {
    let ps_x = v.phi_s.diff("x");
    let mut terms = vec![&p.f_x * &v.phi_s, -v.phi_s.diff("t"), -(&ps_x * &p.f)];
    if with_noise {
        terms.push(-(half() * ps_x.diff("x") * p.g.powi(2)));
    }
    Expr::sum(terms).simplify()
}

/// `g_t τ + ½ τ_t g + g_x φ + ½ g_xx φ̃² − φ_x g`
fn diffusion_row(p: &Partials, v: &VectorField) -> Expr {
    Expr::sum(vec![
        &p.g_t * &v.tau,
        half() * v.tau.diff("t") * &p.g,
        &p.g_x * &v.phi,
        half() * &p.g_xx * v.phi_s.powi(2),
        -(v.phi.diff("x") * &p.g),
    ])
    .simplify()
}

/// `g_x φ̃ − φ̃_x g`
fn diffusion_noise_row(p: &Partials, v: &VectorField) -> Expr {
    (&p.g_x * &v.phi_s - v.phi_s.diff("x") * &p.g).simplify()
}

/// Classical determining equations for a deterministic generator.
pub fn classical_system(sde: &Sde, v: &VectorField) -> Result<DeterminingSystem, DeterminingError> {
    v.check_tau()?;
    if !v.is_deterministic() {
        return Err(DeterminingError::StochasticPartPresent(v.phi_s.to_string()));
    }
    let p = Partials::of(sde);
    let det = VectorField::deterministic(v.tau.clone(), v.phi.clone());
    Ok(DeterminingSystem::new(SystemKind::Classical, vec![drift_row(&p, &det, true), diffusion_row(&p, &det)]))
}

/// Four-row system for generators with a stochastic spatial part, in the
/// order: drift, drift-noise, diffusion, diffusion-noise.
pub fn stochastic_system(sde: &Sde, v: &VectorField) -> Result<DeterminingSystem, DeterminingError> {
    v.check_tau()?;
    let p = Partials::of(sde);
    Ok(DeterminingSystem::new(
        SystemKind::Stochastic,
        vec![drift_row(&p, v, true), drift_noise_row(&p, v, true), diffusion_row(&p, v), diffusion_noise_row(&p, v)],
    ))
}

/// Rows surviving when the diffusion vanishes.
pub fn deterministic_ode_system(sde: &Sde, v: &VectorField) -> Result<DeterminingSystem, DeterminingError> {
    v.check_tau()?;
    if !sde.is_deterministic() {
        return Err(DeterminingError::NonzeroDiffusion(sde.diffusion.to_string()));
    }
    let p = Partials::of(sde);
    Ok(DeterminingSystem::new(
        SystemKind::DeterministicOde,
        vec![drift_row(&p, v, false), drift_noise_row(&p, v, false)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian() -> Sde {
        Sde::parse("0", "1", &[]).unwrap()
    }

    fn langevin() -> Sde {
        Sde::parse("a*x", "b", &[("a", 1.0), ("b", 1.0)]).unwrap()
    }

    fn field(sde: &Sde, tau: &str, phi: &str, phi_s: &str) -> VectorField {
        VectorField::parse(tau, phi, phi_s, &sde.symbols()).unwrap()
    }

    #[test]
    fn brownian_scaling_is_classical_symmetry() {
        let b = brownian();
        let sys = classical_system(&b, &field(&b, "2*t", "x", "0")).unwrap();
        assert!(sys.is_identically_zero(), "{:?}", sys.residuals);
    }

    #[test]
    fn zero_field_always_solves() {
        for sde in [brownian(), langevin()] {
            let z = VectorField::zero();
            assert!(classical_system(&sde, &z).unwrap().is_identically_zero());
            assert!(stochastic_system(&sde, &z).unwrap().is_identically_zero());
        }
    }

    #[test]
    fn langevin_exponential_translation() {
        let l = langevin();
        let sys = classical_system(&l, &field(&l, "0", "exp(a*t)", "0")).unwrap();
        assert!(sys.is_identically_zero(), "{:?}", sys.residuals);
        let sys = stochastic_system(&l, &field(&l, "0", "0", "exp(a*t)")).unwrap();
        assert!(sys.is_identically_zero(), "{:?}", sys.residuals);
    }

    #[test]
    fn brownian_pure_stochastic_generator() {
        let b = brownian();
        let sys = stochastic_system(&b, &field(&b, "0", "0", "1")).unwrap();
        assert_eq!(sys.residuals.len(), 4);
        assert!(sys.is_identically_zero());
    }

    #[test]
    fn stochastic_reduces_to_classical() {
        let l = langevin();
        let v = field(&l, "exp(2*a*t)/a", "x*exp(2*a*t) + t^2", "0");
        let c = classical_system(&l, &v).unwrap();
        let s = stochastic_system(&l, &v).unwrap();
        assert_eq!(s.residuals[0], c.residuals[0]);
        assert_eq!(s.residuals[2], c.residuals[1]);
        assert!(s.residuals[1].is_zero() && s.residuals[3].is_zero());
    }

    #[test]
    fn tau_must_not_depend_on_x() {
        let b = brownian();
        let v = field(&b, "x", "0", "0");
        assert!(matches!(classical_system(&b, &v), Err(DeterminingError::TauDependsOnX(_))));
        assert!(matches!(stochastic_system(&b, &v), Err(DeterminingError::TauDependsOnX(_))));
        // x - x is not an x-dependence.
        assert!(classical_system(&b, &field(&b, "x - x + t", "0", "0")).is_ok());
    }

    #[test]
    fn classical_rejects_stochastic_part() {
        let b = brownian();
        let v = field(&b, "0", "0", "1");
        assert!(matches!(classical_system(&b, &v), Err(DeterminingError::StochasticPartPresent(_))));
    }

    #[test]
    fn ode_system_requires_zero_diffusion() {
        let b = brownian();
        let v = field(&b, "0", "0", "1");
        assert!(matches!(deterministic_ode_system(&b, &v), Err(DeterminingError::NonzeroDiffusion(_))));
    }

    #[test]
    fn ode_constant_stochastic_part_on_trivial_equation() {
        let ode = Sde::parse("0", "0", &[]).unwrap();
        let sym = ode.symbols().with_params(["c"]);
        let v = VectorField::parse("0", "0", "c", &sym).unwrap();
        assert!(deterministic_ode_system(&ode, &v).unwrap().is_identically_zero());
        let v = VectorField::parse("0", "0", "c*t", &sym).unwrap();
        let sys = deterministic_ode_system(&ode, &v).unwrap();
        assert_eq!(sys.residuals[1], (-Expr::param("c")).simplify());
    }

    #[test]
    fn ode_linear_drift_exponential_part() {
        let ode = Sde::parse("x", "0", &[]).unwrap();
        let v = field(&ode, "0", "0", "exp(t)");
        let sys = deterministic_ode_system(&ode, &v).unwrap();
        assert!(sys.residuals[1].is_zero(), "{}", sys.residuals[1]);
    }

    #[test]
    fn ode_quadratic_drift_noise_row() {
        // f = x², φ̃ = x²: f_x φ̃ = 2x³ and φ̃_x f = 2x³ cancel.
        let ode = Sde::parse("x^2", "0", &[]).unwrap();
        let v = field(&ode, "0", "0", "x^2");
        let sys = deterministic_ode_system(&ode, &v).unwrap();
        assert!(sys.residuals[1].is_zero(), "{}", sys.residuals[1]);
    }

    #[test]
    fn display_uses_part_tags() {
        let b = brownian();
        assert_eq!(field(&b, "2*t", "x", "0").to_string(), "[2*t∂t + x∂x]^D");
        assert_eq!(field(&b, "0", "0", "1").to_string(), "[∂x]^S");
        assert_eq!(field(&b, "1", "0", "x").to_string(), "[∂t]^D + [x∂x]^S");
    }

    #[test]
    fn undeclared_symbols_fail_validation() {
        let mut sde = langevin();
        sde.params.remove("b");
        assert!(matches!(sde.validate(), Err(DeterminingError::UndeclaredSymbol { role: "diffusion", .. })));
    }
}
