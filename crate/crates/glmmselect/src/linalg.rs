//! Dense helpers for the small per-cluster covariance matrices.
//!
//! Cluster sizes are tiny compared to the predictor count, so a direct
//! Cholesky factorization is cheaper and more predictable than calling out
//! to an external LAPACK build.

use ndarray::Array2;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Returns `None` when a pivot drops below `PIVOT_FLOOR`, which callers
/// treat as "not positive definite".
pub(crate) fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= PIVOT_FLOOR {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Some(l)
}

/// Pivots at or below this value make the factorization unusable.
const PIVOT_FLOOR: f64 = 1e-300;

/// Inverse and log-determinant computed from one Cholesky factorization.
pub(crate) fn spd_inverse_logdet(a: &Array2<f64>) -> Option<(Array2<f64>, f64)> {
    let l = cholesky(a)?;
    let n = l.nrows();
    let mut logdet = 0.0;
    for j in 0..n {
        logdet += l[[j, j]].ln();
    }
    logdet *= 2.0;

    // Invert L in place (forward substitution on the identity), then
    // assemble inv(A) = inv(L)' inv(L).
    let mut linv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        linv[[j, j]] = 1.0 / l[[j, j]];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[[i, k]] * linv[[k, j]];
            }
            linv[[i, j]] = -s / l[[i, i]];
        }
    }
    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[[k, i]] * linv[[k, j]];
            }
            inv[[i, j]] = s;
            inv[[j, i]] = s;
        }
    }
    Some((inv, logdet))
}

/// Replaces `a` with its symmetric part. Rank-one maintenance applies this
/// after every edit so round-off cannot accumulate asymmetry.
pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let mean = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = mean;
            a[[j, i]] = mean;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn inverse_of_diagonal() {
        let a = array![[2.0, 0.0], [0.0, 1.0]];
        let (inv, logdet) = spd_inverse_logdet(&a).unwrap();
        assert!((inv[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((inv[[1, 1]] - 1.0).abs() < 1e-15);
        assert!(inv[[0, 1]].abs() < 1e-15);
        assert!((logdet - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = array![
            [4.0, 1.0, 0.5],
            [1.0, 3.0, 0.2],
            [0.5, 0.2, 2.0]
        ];
        let (inv, _) = spd_inverse_logdet(&a).unwrap();
        let prod = inv.dot(&a);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(spd_inverse_logdet(&a).is_none());
    }
}
