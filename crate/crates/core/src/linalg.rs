//! Dense linear-algebra helpers over `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-9;

/// Orthonormal basis of the right nullspace of `m`.
///
/// Singular values at or below `tol` times the largest one count as zero.
/// Wide matrices are padded with zero rows so the SVD yields a full `V`.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let n = m.ncols();
    if n == 0 {
        return Vec::new();
    }
    if m.nrows() == 0 {
        return (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    }
    let a = if m.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.rows_mut(0, m.nrows()).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax;
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if smax == 0.0 || *s <= cutoff {
            out.push(v_t.row(i).transpose());
        }
    }
    out
}

/// Numerical rank with the same relative cutoff as [`nullspace`].
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|v| **v > tol * smax).count()
}

/// Minimum-norm least-squares solution of `a x ≈ b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let rows = a.nrows().max(a.ncols());
    let (a, b) = if a.nrows() < a.ncols() {
        let mut pa = DMatrix::zeros(rows, a.ncols());
        pa.rows_mut(0, a.nrows()).copy_from(a);
        let mut pb = DVector::zeros(rows);
        pb.rows_mut(0, b.len()).copy_from(b);
        (pa, pb)
    } else {
        (a.clone(), b.clone())
    };
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(&b, (tol * smax).max(f64::MIN_POSITIVE)).expect("U and V^T were computed")
}

/// Reduced row-echelon form of the row vectors, dropping zero rows.
///
/// Entries below `1e-10` (relative to the largest magnitude) are cleared.
pub fn rref(rows: &[DVector<f64>]) -> Vec<DVector<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let n = rows[0].len();
    let mut m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let eps = 1e-10 * scale;
    let mut lead = 0;
    for col in 0..n {
        if lead >= m.nrows() {
            break;
        }
        let (mut best, mut best_abs) = (lead, 0.0);
        for r in lead..m.nrows() {
            if m[(r, col)].abs() > best_abs {
                best = r;
                best_abs = m[(r, col)].abs();
            }
        }
        if best_abs <= eps {
            continue;
        }
        m.swap_rows(lead, best);
        let p = m[(lead, col)];
        for j in 0..n {
            m[(lead, j)] /= p;
        }
        for r in 0..m.nrows() {
            if r != lead {
                let k = m[(r, col)];
                if k != 0.0 {
                    for j in 0..n {
                        m[(r, j)] -= k * m[(lead, j)];
                    }
                }
            }
        }
        lead += 1;
    }
    m.iter_mut().for_each(|v| {
        if v.abs() <= 1e-10 {
            *v = 0.0;
        }
    });
    (0..lead).map(|r| m.row(r).transpose()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_row_leaves_two_directions() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let ns = nullspace(&m, RANK_TOL);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(v[0].abs() < 1e-14);
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_map_has_full_nullspace() {
        assert_eq!(nullspace(&DMatrix::zeros(3, 3), RANK_TOL).len(), 3);
        assert!(nullspace(&DMatrix::zeros(5, 0), RANK_TOL).is_empty());
    }

    #[test]
    fn known_rank_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = DMatrix::from_fn(40, 4, |_, _| rng.random_range(-1.0..1.0));
        let p = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let m = &r * &p;
        let ns = nullspace(&m, RANK_TOL);
        assert_eq!(ns.len(), 2);
        assert_eq!(rank(&m, RANK_TOL), 4);
        for v in &ns {
            assert!((&m * v).norm() < 1e-10);
        }
        assert!((ns[0].dot(&ns[1])).abs() < 1e-12);
    }

    #[test]
    fn rref_canonicalizes_a_span() {
        let rows = vec![DVector::from_vec(vec![2.0, 4.0, 0.0]), DVector::from_vec(vec![1.0, 2.0, 1.0])];
        let r = rref(&rows);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].as_slice(), &[1.0, 2.0, 0.0]);
        assert_eq!(r[1].as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn min_norm_least_squares() {
        // x + y = 2 has min-norm solution (1, 1).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = lstsq(&a, &DVector::from_vec(vec![2.0]), RANK_TOL);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
