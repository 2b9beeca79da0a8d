//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots below this fraction of the matrix scale count as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-12;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Solve `matrix·x = rhs` by LU with partial pivoting, rejecting near-singular systems.
pub fn solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = matrix.amax();
    if scale == 0.0 {
        return Err(Error::Singular("zero matrix".into()));
    }
    let lu = matrix.clone().lu();
    let upper = lu.u();
    let min_pivot = upper
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    if min_pivot < PIVOT_THRESHOLD * scale {
        return Err(Error::Singular(format!(
            "pivot {min_pivot:.3e} below threshold (scale {scale:.3e})"
        )));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

fn singular_values_padded(matrix: &DMatrix<f64>) -> DVector<f64> {
    let n = matrix.nrows().max(matrix.ncols());
    let mut sq = DMatrix::zeros(n, n);
    sq.view_mut((0, 0), (matrix.nrows(), matrix.ncols()))
        .copy_from(matrix);
    sq.singular_values()
}

/// Numerical rank with the relative singular-value threshold.
pub fn rank(matrix: &DMatrix<f64>) -> usize {
    if matrix.is_empty() {
        return 0;
    }
    let sv = singular_values_padded(matrix);
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter()
        .filter(|sv_i| **sv_i > RANK_THRESHOLD * top)
        .count()
}

/// Orthonormal basis (as columns) of the right nullspace of `matrix`.
pub fn nullspace(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = matrix.ncols();
    if matrix.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let n = matrix.nrows().max(cols);
    let mut sq = DMatrix::zeros(n, cols);
    sq.view_mut((0, 0), (matrix.nrows(), cols))
        .copy_from(matrix);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| top == 0.0 || svd.singular_values[i] <= RANK_THRESHOLD * top)
        .collect();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    basis
}

/// Pfaffian of an antisymmetric matrix of even order, by skew Gaussian
/// elimination with pivoting.
pub fn pfaffian(matrix: &DMatrix<f64>) -> f64 {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols());
    if n % 2 == 1 {
        return 0.0;
    }
    let mut work = matrix.clone();
    let mut pf = 1.0;
    for k in (0..n).step_by(2) {
        let (offset, _) = work
            .row(k)
            .columns(k + 1, n - k - 1)
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        let pivot_idx = k + 1 + offset;
        if pivot_idx != k + 1 {
            work.swap_rows(k + 1, pivot_idx);
            work.swap_columns(k + 1, pivot_idx);
            pf = -pf;
        }
        let pivot = work[(k, k + 1)];
        if pivot == 0.0 {
            return 0.0;
        }
        pf *= pivot;
        if k + 2 < n {
            // Eliminate row/column k+1 contributions using the (k, k+1) pivot.
            let tau: Vec<f64> = (k + 2..n).map(|i| work[(k, i)] / pivot).collect();
            for (ti, i) in (k + 2..n).enumerate() {
                for (tj, j) in (k + 2..n).enumerate() {
                    let upd = tau[ti] * work[(k + 1, j)] - tau[tj] * work[(k + 1, i)];
                    work[(i, j)] -= upd;
                }
            }
        }
    }
    pf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_rejects_singular() {
        let matrix = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve(&matrix, &DVector::from_vec(vec![1.0, 1.0])).is_err());
        let matrix = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let sol = solve(&matrix, &DVector::from_vec(vec![3.0, 5.0])).unwrap();
        assert!((sol[0] - 0.8).abs() < 1e-15 && (sol[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn rank_and_nullspace() {
        let matrix = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        assert_eq!(rank(&matrix), 1);
        let ns = nullspace(&matrix);
        assert_eq!(ns.ncols(), 2);
        assert!((&matrix * &ns).amax() < 1e-14);
    }

    #[test]
    fn pfaffian_small_cases() {
        // Pf [[0,a],[-a,0]] = a
        let matrix = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]);
        assert_eq!(pfaffian(&matrix), 3.0);
        // Pf of 4x4 = a12 a34 - a13 a24 + a14 a23
        let (a12, a13, a14, a23, a24, a34) = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let matrix = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, a12, a13, a14, -a12, 0.0, a23, a24, -a13, -a23, 0.0, a34, -a14, -a24, -a34,
                0.0,
            ],
        );
        let expect = a12 * a34 - a13 * a24 + a14 * a23;
        assert!((pfaffian(&matrix) - expect).abs() < 1e-12);
        // Pf² = det
        assert!((pfaffian(&matrix).powi(2) - matrix.determinant()).abs() < 1e-10);
    }
}
