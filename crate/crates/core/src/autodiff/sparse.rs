use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Constant compressed-sparse-row matrix; used for neighbourhood aggregation
/// and per-snapshot pooling over stacked node batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `self · dense`.
    pub fn mul_dense(&self, dense: &Matrix) -> Matrix {
        assert_eq!(self.cols, dense.rows());
        let width = dense.cols();
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let src = dense.row(c);
                let dst = out.row_mut(r);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        out
    }

    /// `out += selfᵀ · dense`.
    pub fn transpose_mul_dense_into(&self, dense: &Matrix, out: &mut Matrix) {
        assert_eq!(self.rows, dense.rows());
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let src = dense.row(r);
                let dst = out.row_mut(c);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_products() {
        let csr = Csr::from_triplets(3, 4, vec![(0, 1, 2.0), (2, 3, -1.0), (0, 1, 0.5), (1, 0, 4.0)]);
        let dense = csr.to_dense();
        assert_eq!(dense[(0, 1)], 2.5);
        let x = Matrix::from_fn(4, 2, |i, j| (i + 3 * j) as f64 - 1.5);
        assert_eq!(csr.mul_dense(&x), dense.matmul(&x).unwrap());
        let g = Matrix::from_fn(3, 2, |i, j| (2 * i + j) as f64 * 0.25);
        let mut out = Matrix::zeros(4, 2);
        csr.transpose_mul_dense_into(&g, &mut out);
        assert_eq!(out, dense.transpose().matmul(&g).unwrap());
    }
}
