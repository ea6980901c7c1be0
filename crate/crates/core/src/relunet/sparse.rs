//! Compressed-row weight storage.
//!
//! Compiled estimator networks are block-structured: parallel sums are
//! block-diagonal and compositions only stack or concatenate blocks. Their
//! logical dense size grows far faster than their nonzero count, so weights
//! are kept in CSR form while every shape and parameter count refers to the
//! logical dense matrix.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Row-major dense data; exact zeros are not stored.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "dense block {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let mut m = SparseMatrix::zeros(rows, cols);
        m.row_ptr.clear();
        m.row_ptr.push(0);
        for i in 0..rows {
            for j in 0..cols {
                let v = data[i * cols + j];
                if v != 0.0 {
                    m.col_idx.push(j);
                    m.values.push(v);
                }
            }
            m.row_ptr.push(m.col_idx.len());
        }
        Ok(m)
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        SparseMatrix::from_dense(m.rows(), m.cols(), m.data()).expect("matrix shape is consistent")
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

    /// Stored `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[i * self.cols + j] = v;
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    /// `out = self * x + bias`.
    pub fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.rows);
        for i in 0..self.rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out.push(acc + bias[i]);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.affine_into(x, &vec![0.0; self.rows], &mut out);
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return SparseMatrix::zeros(self.rows, self.cols);
        }
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= s;
        }
        m
    }

    /// Stacks blocks vertically; all must share the column count.
    pub fn vstack(blocks: &[&SparseMatrix]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::shape("vertical stack of blocks with different widths"));
        }
        let mut m = SparseMatrix::zeros(0, cols);
        for b in blocks {
            let offset = m.col_idx.len();
            m.col_idx.extend_from_slice(&b.col_idx);
            m.values.extend_from_slice(&b.values);
            m.row_ptr.extend(b.row_ptr[1..].iter().map(|p| p + offset));
            m.rows += b.rows;
        }
        Ok(m)
    }

    /// Concatenates blocks horizontally; all must share the row count.
    pub fn hstack(blocks: &[&SparseMatrix]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::shape("horizontal stack of blocks with different heights"));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut m = SparseMatrix::zeros(rows, cols);
        m.row_ptr.clear();
        m.row_ptr.push(0);
        for i in 0..rows {
            let mut offset = 0;
            for b in blocks {
                for (j, v) in b.row(i) {
                    m.col_idx.push(j + offset);
                    m.values.push(v);
                }
                offset += b.cols;
            }
            m.row_ptr.push(m.col_idx.len());
        }
        Ok(m)
    }

    pub fn block_diag(blocks: &[&SparseMatrix]) -> Self {
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut m = SparseMatrix::zeros(0, cols);
        let mut col_offset = 0;
        for b in blocks {
            let offset = m.col_idx.len();
            m.col_idx.extend(b.col_idx.iter().map(|j| j + col_offset));
            m.values.extend_from_slice(&b.values);
            m.row_ptr.extend(b.row_ptr[1..].iter().map(|p| p + offset));
            m.rows += b.rows;
            col_offset += b.cols;
        }
        m
    }

    /// `sum_i alpha_i * blocks_i` for blocks of equal shape.
    pub fn linear_combination(coeffs: &[f64], blocks: &[&SparseMatrix]) -> Result<Self> {
        let (rows, cols) = blocks.first().map_or((0, 0), |b| (b.rows, b.cols));
        if blocks.iter().any(|b| b.rows != rows || b.cols != cols) {
            return Err(Error::shape("linear combination of blocks with different shapes"));
        }
        let mut dense = vec![0.0; rows * cols];
        for (a, b) in coeffs.iter().zip(blocks) {
            for i in 0..rows {
                for (j, v) in b.row(i) {
                    dense[i * cols + j] += a * v;
                }
            }
        }
        SparseMatrix::from_dense(rows, cols, &dense)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> SparseMatrix {
        SparseMatrix::from_dense(rows, cols, data).unwrap()
    }

    #[test]
    fn dense_roundtrip_and_matvec() {
        let a = m(2, 3, &[1.0, 0.0, 2.0, 0.0, -3.0, 0.0]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.to_dense(), vec![1.0, 0.0, 2.0, 0.0, -3.0, 0.0]);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]), vec![7.0, -6.0]);
        assert_eq!(a.get(1, 1), -3.0);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn stacking() {
        let a = m(1, 2, &[1.0, 2.0]);
        let b = m(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let v = SparseMatrix::vstack(&[&a, &b]).unwrap();
        assert_eq!(v.to_dense(), vec![1.0, 2.0, 3.0, 0.0, 0.0, 4.0]);
        let c = m(1, 1, &[5.0]);
        let h = SparseMatrix::hstack(&[&a, &c]).unwrap();
        assert_eq!(h.to_dense(), vec![1.0, 2.0, 5.0]);
        let d = SparseMatrix::block_diag(&[&a, &c]);
        assert_eq!((d.rows(), d.cols()), (2, 3));
        assert_eq!(d.to_dense(), vec![1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        assert!(SparseMatrix::vstack(&[&a, &c]).is_err());
        assert!(SparseMatrix::hstack(&[&a, &b]).is_err());
    }

    #[test]
    fn combination() {
        let a = m(1, 2, &[1.0, 2.0]);
        let b = m(1, 2, &[1.0, -2.0]);
        let c = SparseMatrix::linear_combination(&[1.0, 1.0], &[&a, &b]).unwrap();
        assert_eq!(c.to_dense(), vec![2.0, 0.0]);
        assert_eq!(c.nnz(), 1);
    }
}
