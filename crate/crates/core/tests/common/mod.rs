//! Checks shared by the property tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::Rational64;
use num_traits::{One, Zero};
use proptest::prelude::*;
use stochsym::ansatz::{solve_symmetries, Ansatz, Mode, SolverOptions};
use stochsym::determining::{classical_system, stochastic_system, Sde, VectorField};
use stochsym::expr::{Expr, Node, Number, SymbolTable};
use stochsym::grid::{sample_points, Window};
use stochsym::lie::{bracket, structure_constants};
use stochsym::numeric::{euler_maruyama, flow_apply, FlowMap};

// Expressions.

/// Expressions in t, x and a parameter that are smooth on t ∈ [0.1, 2], x ∈ [0.5, 2].
pub fn smooth_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("t".to_string()),
        Just("x".to_string()),
        (-4i32..=4).prop_map(|k| k.to_string()),
        (1i32..=5, 2i32..=4).prop_map(|(p, q)| format!("{p}/{q}")),
        Just("a".to_string()),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})/(1 + ({b})^2)")),
            (inner.clone(), 2i32..=3).prop_map(|(a, n)| format!("({a})^{n}")),
            inner.clone().prop_map(|a| format!("exp(({a})/(1 + ({a})^2))")),
            inner.clone().prop_map(|a| format!("log(2 + ({a})^2)")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

pub fn points() -> impl Strategy<Value = (f64, f64)> {
    (0.1f64..2.0, 0.5f64..2.0)
}

pub fn expr_table() -> SymbolTable {
    SymbolTable::new().with_params(["a"])
}

pub fn at(e: &Expr, t: f64, x: f64) -> f64 {
    let p: HashMap<String, f64> = [("t".into(), t), ("x".into(), x), ("a".into(), 0.7)].into();
    e.eval(&p).unwrap()
}

/// Five-point central difference.
fn fd(e: &Expr, var: &str, t: f64, x: f64) -> f64 {
    let h = 1e-3;
    let f = |d: f64| if var == "t" { at(e, t + d, x) } else { at(e, t, x + d) };
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

/// Symbolic partials against finite differences, relative to max(|f'|, |f|, 1).
pub fn check_derivative(src: &str, t: f64, x: f64) -> Result<(), String> {
    let e = expr_table().parse(src).map_err(|e| e.to_string())?;
    for var in ["t", "x"] {
        let d = at(&e.diff(var), t, x);
        let approx = fd(&e, var, t, x);
        let scale = d.abs().max(at(&e, t, x).abs()).max(1.0);
        if (d - approx).abs() > 1e-6 * scale {
            return Err(format!("d/d{var} {src} at ({t}, {x}): {d} vs {approx}"));
        }
    }
    Ok(())
}

// Determining systems.

type Poly = BTreeMap<(u32, u32), Rational64>;

/// Exact expansion of a polynomial in t and x; panics outside that class.
fn poly(e: &Expr) -> Poly {
    let constant = |r: Rational64| -> Poly {
        if r.is_zero() {
            Poly::new()
        } else {
            [((0, 0), r)].into()
        }
    };
    match e.node() {
        Node::Const(Number::Rational(r)) => constant(*r),
        Node::Var(v) if &**v == "t" => [((1, 0), Rational64::one())].into(),
        Node::Var(v) if &**v == "x" => [((0, 1), Rational64::one())].into(),
        Node::Sum(ts) => ts.iter().map(poly).fold(Poly::new(), add),
        Node::Product(fs) => fs.iter().map(poly).fold(constant(Rational64::one()), |a, b| mul(&a, &b)),
        Node::Neg(a) => poly(a).into_iter().map(|(k, v)| (k, -v)).collect(),
        Node::Power(b, n) => {
            let Some(Number::Rational(n)) = n.as_const() else { panic!("non-constant exponent in {e}") };
            assert!(n.is_integer() && *n.numer() >= 0, "negative power in {e}");
            let base = poly(b);
            (0..*n.numer()).fold(constant(Rational64::one()), |acc, _| mul(&acc, &base))
        }
        Node::Quotient(a, b) => {
            let Some(Number::Rational(d)) = b.as_const() else { panic!("non-constant divisor in {e}") };
            poly(a).into_iter().map(|(k, v)| (k, v / d)).collect()
        }
        _ => panic!("not a polynomial: {e}"),
    }
}

fn add(mut a: Poly, b: Poly) -> Poly {
    for (k, v) in b {
        let slot = a.entry(k).or_insert_with(Rational64::zero);
        *slot += v;
        if slot.is_zero() {
            a.remove(&k);
        }
    }
    a
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (&(i, j), u) in a {
        for (&(k, l), v) in b {
            out = add(out, [((i + k, j + l), u * v)].into());
        }
    }
    out
}

/// Reduced row-echelon basis of the nullspace of an exact matrix.
fn exact_nullspace(mut m: Vec<Vec<Rational64>>, n: usize) -> Vec<Vec<Rational64>> {
    let pivots = rref(&mut m, n);
    let mut basis: Vec<Vec<Rational64>> = (0..n)
        .filter(|c| !pivots.contains(c))
        .map(|f| {
            let mut v = vec![Rational64::zero(); n];
            v[f] = Rational64::one();
            for (row, &p) in pivots.iter().enumerate() {
                v[p] = -m[row][f];
            }
            v
        })
        .collect();
    rref(&mut basis, n);
    basis
}

/// Gauss-Jordan in place; returns the pivot columns.
fn rref(rows: &mut [Vec<Rational64>], n: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    for c in 0..n {
        let r = pivots.len();
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, p);
        let lead = rows[r][c];
        rows[r].iter_mut().for_each(|v| *v /= lead);
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c];
                let pivot = rows[r].clone();
                rows[i].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
        pivots.push(c);
    }
    pivots
}

/// Symmetry coefficients by collecting monomials of the generic residuals.
fn oracle(sde: &Sde, tau: &[Expr], phi: &[Expr]) -> Vec<Vec<Rational64>> {
    let n = tau.len() + phi.len();
    let c: Vec<Expr> = (0..n).map(|k| Expr::param(&format!("c{k}"))).collect();
    let combine =
        |dict: &[Expr], off: usize| Expr::sum(dict.iter().enumerate().map(|(k, d)| &c[off + k] * d).collect());
    let generic = VectorField::deterministic(combine(tau, 0), combine(phi, tau.len()));
    let ds = classical_system(sde, &generic).unwrap();
    let mut columns: Vec<Poly> = Vec::with_capacity(n);
    for k in 0..n {
        let unit: HashMap<String, Expr> =
            (0..n).map(|j| (format!("c{j}"), if j == k { Expr::one() } else { Expr::zero() })).collect();
        let mut col = Poly::new();
        for (row, r) in ds.residuals.iter().enumerate() {
            for ((i, j), v) in poly(&r.substitute(&unit).simplify()) {
                col.insert((i + 100 * row as u32, j), v);
            }
        }
        columns.push(col);
    }
    let keys: BTreeSet<(u32, u32)> = columns.iter().flat_map(|c| c.keys().copied()).collect();
    let rows = keys.iter().map(|k| columns.iter().map(|c| c.get(k).copied().unwrap_or_default()).collect()).collect();
    exact_nullspace(rows, n)
}

fn subsets<T: Clone>(pool: &[T]) -> Vec<Vec<T>> {
    (0..1u32 << pool.len())
        .map(|m| (0..pool.len()).filter(|i| m >> i & 1 == 1).map(|i| pool[i].clone()).collect())
        .collect()
}

/// Every dictionary with at most four unknowns drawn from small polynomial
/// pools, for six polynomial equations. Returns the number of cases.
pub fn nullspace_sweep() -> Result<usize, String> {
    let sdes = [("0", "1"), ("-x", "1"), ("x", "1"), ("1", "1"), ("x", "x"), ("2*x", "x/2")];
    let tau_pool = ["1", "t", "t^2"];
    let phi_pool = ["1", "x", "t", "t*x", "x^2"];
    let mut checked = 0;
    for (f, g) in sdes {
        let sde = Sde::parse(f, g, &[]).unwrap();
        let table = sde.symbols();
        let parse = |s: &&str| table.parse(s).unwrap().simplify();
        for tau in subsets(&tau_pool) {
            for phi in subsets(&phi_pool) {
                let n = tau.len() + phi.len();
                if n == 0 || n > 4 {
                    continue;
                }
                let (tau, phi): (Vec<Expr>, Vec<Expr>) =
                    (tau.iter().map(parse).collect(), phi.iter().map(parse).collect());
                let case = format!("dX = {f} dt + {g} dW, τ {tau:?}, φ {phi:?}");
                let want = oracle(&sde, &tau, &phi);
                let ansatz = Ansatz::new(tau, phi, vec![]);
                let basis = solve_symmetries(&sde, &ansatz, Mode::Classical, &SolverOptions::default())
                    .map_err(|e| format!("{case}: {e}"))?;
                if basis.dim() != want.len() {
                    return Err(format!("{case}: dimension {} vs {}", basis.dim(), want.len()));
                }
                for (gen, w) in basis.generators.iter().zip(&want) {
                    for (a, b) in gen.coefficients.iter().zip(w) {
                        let b = *b.numer() as f64 / *b.denom() as f64;
                        if (a - b).abs() >= 1e-9 {
                            return Err(format!("{case}: {:?} vs {w:?}", gen.coefficients));
                        }
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Deterministic fields built from a few smooth pieces.
pub fn deterministic_field() -> impl Strategy<Value = (String, String)> {
    let piece = prop_oneof![
        Just("1"),
        Just("t"),
        Just("t^2"),
        Just("exp(t)"),
        Just("exp(-2*t)"),
        Just("x"),
        Just("x^2"),
        Just("t*x"),
        Just("x*exp(t)"),
        Just("log(1 + x)"),
    ];
    let tau_piece = prop_oneof![Just("1"), Just("t"), Just("t^2"), Just("exp(t)"), Just("1/(1 + t)")];
    let sum = |p: BoxedStrategy<&'static str>| {
        proptest::collection::vec((p, -3i32..=3), 1..=3)
            .prop_map(|ts| ts.iter().map(|(p, k)| format!("{k}*{p}")).collect::<Vec<_>>().join(" + "))
    };
    (sum(tau_piece.boxed()), sum(piece.boxed()))
}

pub fn sde_strategy() -> impl Strategy<Value = (&'static str, &'static str)> {
    prop_oneof![
        Just(("0", "1")),
        Just(("a*x", "b")),
        Just(("a/x", "1")),
        Just(("a*x + b", "x")),
        Just(("k*x", "1 + x^2")),
    ]
}

/// At φ̃ = 0 the stochastic rows match the classical ones symbolically and
/// at 100 points to 1e-10, and the noise rows vanish.
pub fn check_reduction(f: &str, g: &str, tau: &str, phi: &str) -> Result<(), String> {
    let sde = Sde::parse(f, g, &[("a", 0.7), ("b", 1.3), ("k", -0.4)]).unwrap();
    let v = VectorField::parse(tau, phi, "0", &sde.symbols()).unwrap();
    let classical = classical_system(&sde, &v).unwrap();
    let stochastic = stochastic_system(&sde, &v).unwrap();
    let case = format!("dX = {f} dt + {g} dW, [{tau}, {phi}]");
    if stochastic.residuals[0] != classical.residuals[0] || stochastic.residuals[2] != classical.residuals[1] {
        return Err(format!("{case}: rows differ structurally"));
    }
    if !(stochastic.residuals[1].is_zero() && stochastic.residuals[3].is_zero()) {
        return Err(format!("{case}: noise rows do not vanish"));
    }
    let params = sde.param_values();
    for (t, x) in sample_points(Window::default(), 100, 3) {
        let p: HashMap<String, f64> =
            params.iter().map(|(k, v)| (k.clone(), *v)).chain([("t".into(), t), ("x".into(), x)]).collect();
        for (s, c) in [(0, 0), (2, 1)] {
            let (a, b) = (stochastic.residuals[s].eval(&p).unwrap(), classical.residuals[c].eval(&p).unwrap());
            if (a - b).abs() >= 1e-10 {
                return Err(format!("{case}: row {s} at ({t}, {x}): {a} vs {b}"));
            }
        }
    }
    Ok(())
}

// Brackets.

/// Affine coefficient fields: closed under brackets, so the algebra they
/// generate is finite.
pub fn affine_field() -> impl Strategy<Value = VectorField> {
    (-3i64..=3, -3i64..=3, -3i64..=3, -3i64..=3).prop_map(|(a, b, c, d)| {
        VectorField::deterministic(
            Expr::int(a) + Expr::int(b) * Expr::var("t"),
            Expr::int(c) + Expr::int(d) * Expr::var("x"),
        )
        .simplify()
    })
}

pub fn check_bracket_laws(u: &VectorField, v: &VectorField, w: &VectorField, k: i64) -> Result<(), String> {
    let uv = bracket(u, v).unwrap();
    let vu = bracket(v, u).unwrap();
    if uv.add(&vu) != VectorField::zero() {
        return Err(format!("[u, v] + [v, u] ≠ 0 for u = {u}, v = {v}"));
    }
    let lhs = bracket(&u.add(&v.scale(&Expr::int(k))), w).unwrap();
    let rhs = bracket(u, w).unwrap().add(&bracket(v, w).unwrap().scale(&Expr::int(k)));
    if lhs != rhs {
        return Err(format!("not bilinear: {lhs} vs {rhs}"));
    }
    Ok(())
}

/// Jacobi and antisymmetry violations on t∂t, ∂t, x∂x, ∂x, t∂x.
pub fn affine_algebra_violations() -> (f64, f64) {
    let t = SymbolTable::new();
    let f = |tau: &str, phi: &str| VectorField::parse(tau, phi, "0", &t).unwrap();
    let basis = vec![f("t", "0"), f("1", "0"), f("0", "x"), f("0", "1"), f("0", "t")];
    let c = structure_constants(&basis, &HashMap::new(), Window::default(), 3).unwrap();
    (c.jacobi_violation(), c.max_antisymmetry_violation())
}

// Flows.

fn brownian_field(tau: &str, phi: &str) -> VectorField {
    VectorField::parse(tau, phi, "0", &SymbolTable::new()).unwrap()
}

pub const FLOW_FIELDS: [(&str, &str); 5] =
    [("1", "x"), ("2*t", "x"), ("1 + t^2", "t*x"), ("t", "exp(-t)*x + 1"), ("0", "x^2/4")];

/// Max round-trip error of flowing by ε and back, over [`FLOW_FIELDS`].
pub fn flow_round_trip_error() -> f64 {
    let b = Sde::parse("0", "1", &[]).unwrap();
    let ens = euler_maruyama(&b, 0.5, 0.02, 50, 40, 3).unwrap();
    let none = HashMap::new();
    let mut err: f64 = 0.0;
    for (tau, phi) in FLOW_FIELDS {
        for eps in [0.3, -0.2] {
            let v = brownian_field(tau, phi);
            let (_, fwd) = flow_apply(&ens, &v, eps, &none).unwrap();
            let (_, back) = flow_apply(&fwd, &v, -eps, &none).unwrap();
            for (a, b) in back.times.iter().zip(&ens.times) {
                err = err.max((a - b).abs());
            }
            for i in 0..ens.n_paths() {
                for (a, b) in back.path(i).iter().zip(ens.path(i)) {
                    err = err.max((a - b).abs());
                }
            }
        }
    }
    err
}

/// Max relative gap between η² and a central difference of β.
pub fn eta_squared_error() -> f64 {
    let none = HashMap::new();
    let mut worst: f64 = 0.0;
    for tau in ["1 + t^2", "2*t", "exp(t)", "1/(1 + t)"] {
        let f = FlowMap::new(&brownian_field(tau, "x"), 0.1, &none).unwrap();
        for t in [0.1, 0.5, 1.0, 1.7] {
            let h = 1e-5;
            let fd = (f.beta(t + h).unwrap() - f.beta(t - h).unwrap()) / (2.0 * h);
            worst = worst.max(((f.eta2(t).unwrap() - fd) / fd).abs());
        }
    }
    worst
}
