//! Column-major dense matrix.
//!
//! Products are delegated to `nalgebra` views over the same storage, so no
//! copies are made when multiplying.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("DenseMatrix::from_col_major", nrows * ncols, data.len())?;
        Ok(Self { nrows, ncols, data })
    }

    /// Builds a matrix from row slices; convenient for small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(nrows, ncols, |i, j| rows[i][j])
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    /// Stacks equally long vectors as columns.
    pub fn from_columns(nrows: usize, cols: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(nrows * cols.len());
        for c in cols {
            check_dim("DenseMatrix::from_columns", nrows, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Self {
            nrows,
            ncols: cols.len(),
            data,
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    /// Appends a column in place.
    pub fn push_col(&mut self, col: &[f64]) -> Result<()> {
        if self.ncols == 0 && self.nrows == 0 {
            self.nrows = col.len();
        }
        check_dim("DenseMatrix::push_col", self.nrows, col.len())?;
        self.data.extend_from_slice(col);
        self.ncols += 1;
        Ok(())
    }

    /// Copy of columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start <= end && end <= self.ncols, "column range out of bounds");
        DenseMatrix {
            nrows: self.nrows,
            ncols: end - start,
            data: self.data[start * self.nrows..end * self.nrows].to_vec(),
        }
    }

    /// Horizontal concatenation `[a b ...]`.
    pub fn hcat(blocks: &[&DenseMatrix]) -> Result<DenseMatrix> {
        let nrows = blocks.first().map_or(0, |b| b.nrows);
        let mut out = DenseMatrix::zeros(nrows, 0);
        for b in blocks {
            check_dim("DenseMatrix::hcat", nrows, b.nrows)?;
            out.data.extend_from_slice(&b.data);
            out.ncols += b.ncols;
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub(crate) fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.nrows, self.ncols)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.nrows, self.ncols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: DMatrix<f64>) -> DenseMatrix {
        let (nrows, ncols) = m.shape();
        DenseMatrix {
            nrows,
            ncols,
            data: m.as_slice().to_vec(),
        }
    }

    /// `self * rhs`
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("DenseMatrix::matmul", self.ncols, rhs.nrows)?;
        Ok(Self::from_nalgebra(self.view() * rhs.view()))
    }

    /// `selfᵀ * rhs`
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("DenseMatrix::tr_matmul", self.nrows, rhs.nrows)?;
        // An explicit transpose lets nalgebra use its blocked product.
        Ok(Self::from_nalgebra(self.view().transpose() * rhs.view()))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("DenseMatrix::matvec", self.ncols, x.len())?;
        let mut y = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), &mut y);
            }
        }
        Ok(y)
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("DenseMatrix::tr_matvec", self.nrows, x.len())?;
        Ok((0..self.ncols).map(|j| dot(self.col(j), x)).collect())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self - rhs`
    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("DenseMatrix::sub", self.nrows, rhs.nrows)?;
        check_dim("DenseMatrix::sub", self.ncols, rhs.ncols)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        })
    }

    /// `self += s * rhs`
    pub fn add_scaled(&mut self, s: f64, rhs: &DenseMatrix) -> Result<()> {
        check_dim("DenseMatrix::add_scaled", self.data.len(), rhs.data.len())?;
        axpy(s, &rhs.data, &mut self.data);
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest entry of `|A - Aᵀ|` relative to `max|A|`.
    pub fn symmetry_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0_f64;
        for j in 0..self.ncols {
            for i in 0..j {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let n = self.nrows;
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub(crate) fn require_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[j * self.nrows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[j * self.nrows + i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators; fixed order keeps results bit-reproducible.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}
