use stochsym::ansatz::{solve_symmetries, Ansatz, Mode, SolverOptions};
use stochsym::determining::{Sde, VectorField};
use stochsym::grid::Window;

fn solve(
    drift: &str,
    diffusion: &str,
    params: &[(&str, f64)],
    dict: [&str; 3],
    mode: Mode,
) -> stochsym::ansatz::SymmetryBasis {
    let sde = Sde::parse(drift, diffusion, params).unwrap();
    let a = Ansatz::parse(dict[0], dict[1], dict[2], &sde.symbols()).unwrap();
    solve_symmetries(&sde, &a, mode, &SolverOptions::default()).unwrap()
}

fn field(sde_params: &[&str], tau: &str, phi: &str, phi_s: &str) -> VectorField {
    let table = stochsym::expr::SymbolTable::new().with_params(sde_params.iter().copied());
    VectorField::parse(tau, phi, phi_s, &table).unwrap()
}

fn assert_spans(basis: &stochsym::ansatz::SymmetryBasis, known: &[VectorField]) {
    for v in known {
        let r = basis.span_residual(v, Window::default(), 64, 5).unwrap();
        assert!(r < 1e-8, "{v} not in span: {r:e}");
    }
}

#[test]
fn brownian_classical() {
    let b = solve("0", "1", &[], ["poly(t,1)", "poly(x,1)", ""], Mode::Classical);
    assert_eq!(b.dim(), 3);
    assert_spans(&b, &[field(&[], "2*t", "x", "0"), field(&[], "0", "1", "0"), field(&[], "1", "0", "0")]);
}

#[test]
fn brownian_stochastic() {
    let b = solve("0", "1", &[], ["poly(t,1)", "poly(x,1)", "poly(x,1)"], Mode::Stochastic);
    assert_eq!(b.dim(), 4);
    let shown: Vec<String> = b.generators.iter().map(|g| g.display_field().to_string()).collect();
    assert_eq!(shown, ["[∂t]^D", "[2*t∂t + x∂x]^D", "[∂x]^D", "[∂x]^S"]);
    assert_spans(&b, &[field(&[], "0", "0", "1")]);
}

#[test]
fn langevin_stochastic() {
    let b = solve(
        "a*x",
        "b",
        &[("a", 1.0), ("b", 1.0)],
        ["1 + exp(2*t)", "1 + x + exp(t) + x*exp(2*t)", "1 + exp(t)"],
        Mode::Stochastic,
    );
    for g in &b.generators {
        println!("{}", g.field);
    }
    assert_eq!(b.dim(), 4);
    let p = ["a", "b"];
    assert_spans(
        &b,
        &[
            field(&p, "0", "exp(a*t)", "0"),
            field(&p, "exp(2*a*t)/a", "exp(2*a*t)*x", "0"),
            field(&p, "1", "0", "0"),
            field(&p, "0", "0", "exp(a*t)"),
        ],
    );
}

#[test]
fn inverse_drift_stochastic() {
    let b = solve("a/x", "1", &[("a", 1.0)], ["poly(t,1)", "poly(x,1)", "poly(x,1)"], Mode::Stochastic);
    assert_eq!(b.dim(), 2);
    assert!(b.generators.iter().all(|g| g.field.is_deterministic()));
}
