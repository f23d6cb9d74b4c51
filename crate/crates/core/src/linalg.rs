//! Small dense linear algebra over reals and jets (dimensions here never exceed a handful).

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::jets::Jet;
use crate::scalar::Real;

/// Inverse and determinant of a square matrix of jets, by Gauss–Jordan
/// elimination with partial pivoting on the constant terms.
pub(crate) fn invert_jets<T: Real>(m: &[Vec<Jet<T>>]) -> Result<(Vec<Vec<Jet<T>>>, Jet<T>), Error> {
    let n = m.len();
    let mut a: Vec<Vec<Jet<T>>> = m.to_vec();
    let spec = a[0][0].spec();
    let mut inv: Vec<Vec<Jet<T>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(spec, if i == j { T::one() } else { T::zero() }))
                .collect()
        })
        .collect();
    let mut det = Jet::constant(spec, T::one());
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| {
                a[r][col]
                    .value()
                    .abs()
                    .partial_cmp(&a[s][col].value().abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if a[piv][col].value() == T::zero() {
            return Err(Error::Singular);
        }
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col].clone();
        det = &det * &p;
        let pinv = p.recip()?;
        for j in 0..n {
            a[col][j] = &a[col][j] * &pinv;
            inv[col][j] = &inv[col][j] * &pinv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r][col].clone();
            for j in 0..n {
                a[r][j] = &a[r][j] - &(&factor * &a[col][j]);
                inv[r][j] = &inv[r][j] - &(&factor * &inv[col][j]);
            }
        }
    }
    Ok((inv, det))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let a = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Least-squares solution of `A x ≈ b`. Returns the solution and the residual
/// vector `A x − b`. Fails when `A` is numerically rank deficient.
pub(crate) fn lstsq(a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    if rows < cols || cols == 0 {
        return Err(Error::RankDeficient { rows, cols });
    }
    let am = DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
    let bv = DVector::from_column_slice(b);
    let svd = am.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient { rows, cols });
    }
    let x = svd.solve(&bv, 0.0).map_err(|_| Error::RankDeficient { rows, cols })?;
    let resid = &am * &x - bv;
    Ok((x.iter().copied().collect(), resid.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_known_matrix() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let ev = sym_eigenvalues(&m);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn lstsq_recovers_exact_fit() {
        let a: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, (i * i) as f64]).collect();
        let b: Vec<f64> = (0..6).map(|i| 2.0 - 0.5 * i as f64 + 0.25 * (i * i) as f64).collect();
        let (x, r) = lstsq(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] + 0.5).abs() < 1e-12 && (x[2] - 0.25).abs() < 1e-12);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn lstsq_rank_deficient() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(lstsq(&a, &[1.0, 2.0, 3.0]).is_err());
    }
}
