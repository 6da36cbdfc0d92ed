//! Small dense and tridiagonal linear-algebra helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// ascending order (columns of `vectors` follow the same order).
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SortedEigen> {
    if !m.is_square() {
        return Err(Error::EigenFailure(format!("{}×{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), m.nrows());
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(SortedEigen { values, vectors })
}

/// Solves a tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`
/// by the Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_sorted_with_matching_vectors() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = symmetric_eigen(&m).unwrap();
        assert!(e.values[0] < e.values[1] && e.values[1] < e.values[2]);
        for i in 0..3 {
            let v = e.vectors.column(i);
            assert!((&m * v - v * e.values[i]).norm() < 1e-12);
        }
        assert!((e.values[0] - (2.0 - 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn thomas_matches_dense_solve() {
        let lower = [0.0, -1.0, -0.5, -2.0];
        let diag = [4.0, 5.0, 3.5, 6.0];
        let upper = [1.0, -1.0, 0.25, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let mut a = DMatrix::zeros(4, 4);
        for i in 0..4 {
            a[(i, i)] = diag[i];
            if i > 0 {
                a[(i, i - 1)] = lower[i];
            }
            if i < 3 {
                a[(i, i + 1)] = upper[i];
            }
        }
        let r = &a * DVector::from_column_slice(&x) - DVector::from_column_slice(&rhs);
        assert!(r.norm() < 1e-13);
    }
}
