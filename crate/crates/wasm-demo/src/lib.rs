//! Browser bindings: solve for symmetries, tabulate brackets, and check a
//! generator by residuals and simulated flows.
//!
//! Every entry point takes the equation as text and returns a plain-text
//! report, or an error message for the page to show.

use std::collections::HashMap;

use stochsym::ansatz::{bound_params, solve_symmetries, Ansatz, Mode, SolverOptions, SymmetryBasis};
use stochsym::determining::{stochastic_system, Sde, VectorField};
use stochsym::lie::structure_constants;
use stochsym::numeric::{residual_check, verify_symmetry, McSettings, ResidualOptions};
use wasm_bindgen::prelude::*;

/// Parse `a = 1, b = 0.5` (commas or newlines between entries).
fn parse_params(text: &str) -> Result<Vec<(String, f64)>, String> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for entry in text.split([',', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = entry.split_once('=').ok_or_else(|| format!("expected 'name = value', found '{entry}'"))?;
        let name = name.trim();
        let value: f64 =
            value.trim().parse().map_err(|_| format!("parameter {name}: '{}' is not a number", value.trim()))?;
        if out.iter().any(|(n, _)| n == name) {
            return Err(format!("parameter {name} given twice"));
        }
        out.push((name.to_string(), value));
    }
    Ok(out)
}

fn equation(drift: &str, diffusion: &str, params: &str) -> Result<Sde, String> {
    let params = parse_params(params)?;
    let refs: Vec<(&str, f64)> = params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    Sde::parse(drift, diffusion, &refs).map_err(|e| e.to_string())
}

fn solve(sde: &Sde, tau: &str, phi: &str, phi_s: &str, mode: Mode) -> Result<SymmetryBasis, String> {
    let ansatz = Ansatz::parse(tau, phi, phi_s, &sde.symbols()).map_err(|e| e.to_string())?;
    solve_symmetries(sde, &ansatz, mode, &SolverOptions::default()).map_err(|e| e.to_string())
}

/// Symmetry basis of `dX = drift dt + diffusion dW` over the given
/// dictionaries. `mode` is `classical`, `stochastic` or `det-ode`.
#[wasm_bindgen]
pub fn symmetries(
    drift: &str,
    diffusion: &str,
    params: &str,
    tau: &str,
    phi: &str,
    phi_s: &str,
    mode: &str,
) -> Result<String, String> {
    let sde = equation(drift, diffusion, params)?;
    let basis = solve(&sde, tau, phi, phi_s, mode.parse()?)?;
    let mut out = format!("mode: {}\ndimension: {}\n", basis.mode, basis.dim());
    for (i, g) in basis.generators.iter().enumerate() {
        out += &format!("X{} = {}\n", i + 1, g.display_field());
    }
    for n in &basis.notes {
        out += &format!("note: {n}\n");
    }
    Ok(out)
}

/// Commutator table of the deterministic part of the classical basis.
#[wasm_bindgen]
pub fn brackets(drift: &str, diffusion: &str, params: &str, tau: &str, phi: &str) -> Result<String, String> {
    let sde = equation(drift, diffusion, params)?;
    let basis = solve(&sde, tau, phi, "", Mode::Classical)?;
    let fields: Vec<VectorField> = basis.generators.iter().map(|g| g.display_field()).collect();
    if fields.is_empty() {
        return Ok("no symmetries in this dictionary\n".into());
    }
    let c =
        structure_constants(&fields, &basis.params, SolverOptions::default().window, 0).map_err(|e| e.to_string())?;
    let mut out = String::new();
    for (i, v) in fields.iter().enumerate() {
        out += &format!("X{} = {v}\n", i + 1);
    }
    Ok(out + &c.to_string())
}

/// Residual check of a generator, followed by a Monte-Carlo flow check
/// with `n_paths` paths of 1000 steps on [0, 1] when it is deterministic.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn verify(
    drift: &str,
    diffusion: &str,
    params: &str,
    tau: &str,
    phi: &str,
    phi_s: &str,
    eps: f64,
    n_paths: u32,
    seed: u32,
) -> Result<String, String> {
    let sde = equation(drift, diffusion, params)?;
    let v = VectorField::parse(tau, phi, phi_s, &sde.symbols()).map_err(|e| e.to_string())?;
    let values: HashMap<String, f64> = bound_params(&sde).map_err(|e| e.to_string())?;
    let ds = stochastic_system(&sde, &v).map_err(|e| e.to_string())?;
    let residual = residual_check(&ds, &values, &ResidualOptions::default()).map_err(|e| e.to_string())?;
    let mut out = format!("generator: {v}\n{residual}\n");
    if v.is_deterministic() {
        let mc = McSettings { n_paths: n_paths as usize, seed: seed as u64, ..McSettings::default() };
        let report = verify_symmetry(&sde, &v, eps, &mc).map_err(|e| e.to_string())?;
        out += &report.to_string();
    } else {
        out += "flow check skipped: generator has a stochastic part\n";
    }
    Ok(out)
}
