mod common;

use std::collections::HashMap;

use common::{affine_algebra_violations, affine_field, check_bracket_laws};
use nalgebra::DMatrix;
use proptest::prelude::*;
use stochsym::determining::VectorField;
use stochsym::expr::SymbolTable;
use stochsym::grid::Window;
use stochsym::lie::{match_basis, structure_constants, MatchOptions, MatchOutcome, StructureConstants};

fn field(tau: &str, phi: &str) -> VectorField {
    let t = SymbolTable::new().with_params(["alpha", "beta"]);
    VectorField::parse(tau, phi, "0", &t).unwrap()
}

fn params(alpha: f64, beta: f64) -> HashMap<String, f64> {
    [("alpha".to_string(), alpha), ("beta".to_string(), beta)].into()
}

fn source_basis() -> Vec<VectorField> {
    vec![field("1", "0"), field("exp(2*alpha*t)", "(alpha*x + beta)*exp(2*alpha*t)"), field("0", "exp(alpha*t)")]
}

fn target_basis() -> Vec<VectorField> {
    vec![field("1", "0"), field("2*t", "x"), field("0", "1")]
}

#[test]
fn source_table() {
    for alpha in [0.5, 1.0, 2.0] {
        let c = structure_constants(&source_basis(), &params(alpha, 0.3), Window::default(), 1).unwrap();
        let want = StructureConstants::from_entries(3, &[(1, 0, 1, 2.0 * alpha), (2, 0, 2, alpha)]);
        assert!(c.max_abs_diff(&want) < 1e-9, "alpha = {alpha}\n{c}");
    }
}

#[test]
fn target_table_with_bracket_order_sign() {
    let c = structure_constants(&target_basis(), &HashMap::new(), Window::default(), 1).unwrap();
    // [Y2, Y3] = -Y3 with the commutator convention v(w) - w(v).
    let want = StructureConstants::from_entries(3, &[(0, 0, 1, 2.0), (2, 1, 2, -1.0)]);
    assert!(c.max_abs_diff(&want) < 1e-9, "{c}");
}

#[test]
fn change_of_basis_is_sparse_and_verified_from_scratch() {
    let tgt_basis = target_basis();
    let tgt = structure_constants(&tgt_basis, &HashMap::new(), Window::default(), 1).unwrap();
    for alpha in [0.5, 1.0, 2.0] {
        let p = params(alpha, 0.0);
        let src = structure_constants(&source_basis(), &p, Window::default(), 1).unwrap();
        let opts = MatchOptions { params: vec![alpha], ..MatchOptions::default() };
        let m = match_basis(&src, &tgt, &opts);
        let best = m.best().expect("isomorphic algebras").clone();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0 / alpha, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((&best.a - &want).amax() < 1e-12, "alpha = {alpha}: {}", best.a);
        // Expected: a¹₂ = −1, a²₁ = 1/α, a³₃ = 1. Same up to sign.
        let known = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0 / alpha, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((best.a.abs() - known.abs()).amax() < 1e-12);
        assert!(best.residual < 1e-8);
        let again = structure_constants(&best.apply(&source_basis()), &p, Window::default(), 9).unwrap();
        assert!(again.max_abs_diff(&tgt) < 1e-8);
    }
}

#[test]
fn abelian_plane_does_not_match_affine_algebra() {
    let src = StructureConstants::zeros(2);
    let tgt = StructureConstants::from_entries(2, &[(0, 0, 1, 1.0)]);
    let m = match_basis(&src, &tgt, &MatchOptions::default());
    let MatchOutcome::NoMatch { best_residual, .. } = m else { panic!("unexpected match") };
    assert!(best_residual > 1e-2);
    // Brute force over a coarse grid of invertible A.
    let grid: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.5).collect();
    let mut floor = f64::INFINITY;
    for a in &grid {
        for b in &grid {
            for c in &grid {
                for d in &grid {
                    let m = DMatrix::from_row_slice(2, 2, &[*a, *b, *c, *d]);
                    if m.determinant().abs() > 1e-9 {
                        floor = floor.min(src.transformed(&m).unwrap().max_abs_diff(&tgt));
                    }
                }
            }
        }
    }
    assert!(floor > 1e-2);
}

proptest! {
    #[test]
    fn bracket_is_antisymmetric_and_bilinear(u in affine_field(), v in affine_field(), w in affine_field(), k in -3i64..=3) {
        if let Err(e) = check_bracket_laws(&u, &v, &w, k) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn jacobi_on_affine_algebra() {
    let (jacobi, antisymmetry) = affine_algebra_violations();
    assert!(jacobi < 1e-9);
    assert_eq!(antisymmetry, 0.0);
}
