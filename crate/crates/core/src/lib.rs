//! Lie symmetries of scalar Itô SDEs.
//!
//! The crate builds the determining equations of classical and stochastic
//! symmetry generators, solves them against a finite ansatz dictionary,
//! computes the commutator structure of the resulting algebras, solves for
//! transformations between equations with matching algebras, and certifies
//! every result by Monte-Carlo simulation.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod determining;
pub mod expr;
pub mod grid;
pub mod lie;
pub mod linalg;
pub mod numeric;
pub mod optim;
pub mod transform;

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
