//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn sym_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm of a general matrix via singular values.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |acc, v| acc.max(*v))
}

/// `m^k` by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Block-diagonal matrix from a list of blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Concatenate per-agent vectors into one stacked vector.
pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

/// Split a stacked vector into consecutive pieces of the given sizes.
pub fn unstack(v: &DVector<f64>, sizes: &[usize]) -> Vec<DVector<f64>> {
    let mut off = 0;
    sizes
        .iter()
        .map(|&s| {
            let piece = v.rows(off, s).into_owned();
            off += s;
            piece
        })
        .collect()
}

/// Row-major CSV rendering of a dense matrix.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_matches_naive_product() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.25, 0.5]);
        let mut naive = DMatrix::identity(2, 2);
        for k in 0..9 {
            assert!((matrix_power(&m, k) - &naive).abs().max() < 1e-15);
            naive = &naive * &m;
        }
    }

    #[test]
    fn stack_roundtrip() {
        let parts = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0])];
        let s = stack(&parts);
        assert_eq!(unstack(&s, &[2, 1]), parts);
    }

    #[test]
    fn block_diag_shape() {
        let b = block_diag(&[DMatrix::identity(2, 3), DMatrix::from_element(1, 1, 4.0)]);
        assert_eq!((b.nrows(), b.ncols()), (3, 4));
        assert_eq!(b[(2, 3)], 4.0);
        assert_eq!(b[(2, 0)], 0.0);
    }

    #[test]
    fn csv_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]);
        assert_eq!(matrix_to_csv(&m), "1,2\n3,4.5\n");
    }
}
