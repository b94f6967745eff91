//! Small dense linear algebra on row-major matrices.
//!
//! Everything here is sized for the handful of dimensions a clustering study
//! works in; no attempt is made at blocking or SIMD.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Default, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. An empty outer vector yields a 0×0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[Matrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols && p.rows > 0 {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: p.cols,
                });
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..i {
                let (a, b) = (self[(i, j)], self[(j, i)]);
                if (a - b).abs() > tol * a.abs().max(b.abs()).max(1.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Column means of an n×d matrix.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Maximum-likelihood (divide by n) covariance of the rows.
    pub fn covariance(&self) -> Matrix {
        let mean = self.column_means();
        let d = self.cols;
        let mut cov = Matrix::zeros(d, d);
        let mut diff = vec![0.0; d];
        for row in self.iter_rows() {
            for j in 0..d {
                diff[j] = row[j] - mean[j];
            }
            add_outer(&mut cov, &diff, 1.0);
        }
        let n = self.rows.max(1) as f64;
        cov.data.iter_mut().for_each(|v| *v /= n);
        cov
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.iter_rows()).finish()
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `m += scale · v vᵀ` for a square `m`.
#[inline]
pub fn add_outer(m: &mut Matrix, v: &[f64], scale: f64) {
    let d = v.len();
    for i in 0..d {
        let vi = scale * v[i];
        let row = m.row_mut(i);
        for j in 0..d {
            row[j] += vi * v[j];
        }
    }
}

#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric matrix.
///
/// Only the lower triangle of `covariance` is read. Fails with
/// `NotPositiveDefinite` as soon as a pivot is not strictly positive.
pub fn cholesky_factor(covariance: &Matrix) -> Result<Matrix> {
    let n = covariance.rows();
    if covariance.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: covariance.cols(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = covariance[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = covariance[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// A Cholesky factorization together with the quantities Gaussian densities need.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    lower: Matrix,
    log_det: f64,
    /// `L⁻¹` as a packed row-major lower triangle.
    inverse_packed: Vec<f64>,
}

impl Cholesky {
    pub fn new(covariance: &Matrix) -> Result<Self> {
        let lower = cholesky_factor(covariance)?;
        let d = lower.rows();
        let log_det = 2.0 * (0..d).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let mut inverse = Matrix::zeros(d, d);
        for i in 0..d {
            inverse[(i, i)] = 1.0 / lower[(i, i)];
            for j in 0..i {
                let s: f64 = (j..i).map(|k| lower[(i, k)] * inverse[(k, j)]).sum();
                inverse[(i, j)] = -s / lower[(i, i)];
            }
        }
        let inverse_packed = (0..d).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|ij| inverse[ij]).collect();
        Ok(Self {
            lower,
            log_det,
            inverse_packed,
        })
    }

    /// `L⁻¹` packed row by row: `(0,0), (1,0), (1,1), (2,0), …`.
    pub fn inverse_packed(&self) -> &[f64] {
        &self.inverse_packed
    }

    /// `‖L⁻¹ v‖²`, i.e. `vᵀ Σ⁻¹ v`, without scratch space.
    #[inline]
    pub fn whitened_norm_sq(&self, v: &[f64]) -> f64 {
        let mut at = 0;
        let mut total = 0.0;
        for i in 0..v.len() {
            let row = &self.inverse_packed[at..at + i + 1];
            let y: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            total += y * y;
            at += i + 1;
        }
        total
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// ln det of the factored matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `L y = b` in place.
    #[inline]
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let d = b.len();
        for i in 0..d {
            let row = self.lower.row(i);
            let mut s = b[i];
            for k in 0..i {
                s -= row[k] * b[k];
            }
            b[i] = s / row[i];
        }
    }

    /// `vᵀ Σ⁻¹ v`, using `scratch` as workspace.
    #[inline]
    pub fn quadratic_form(&self, v: &[f64], scratch: &mut [f64]) -> f64 {
        scratch.copy_from_slice(v);
        self.solve_lower_in_place(scratch);
        scratch.iter().map(|y| y * y).sum()
    }

    /// `L z` for a vector `z`.
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let d = z.len();
        for i in 0..d {
            let row = self.lower.row(i);
            out[i] = (0..=i).map(|k| row[k] * z[k]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(l: &Matrix) -> Matrix {
        l.matmul(&l.transpose()).unwrap()
    }

    #[test]
    fn identity_factor_is_identity() {
        let l = cholesky_factor(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn two_by_two_factor() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky_factor(&a).unwrap();
        let expected = Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 2f64.sqrt()]]).unwrap();
        assert!(l.max_abs_diff(&expected) < 1e-15);
        // L·Lᵀ by direct multiplication reproduces the input
        let back = reconstruct(&l);
        assert!(back.max_abs_diff(&a) <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_factor(&a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn log_det_matches_product_of_pivots() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = Cholesky::new(&a).unwrap();
        assert!((c.log_det() - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn quadratic_form_matches_explicit_inverse() {
        // [[4,2],[2,3]]⁻¹ = [[3,-2],[-2,4]] / 8
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = Cholesky::new(&a).unwrap();
        let v = [1.0, -2.0];
        let mut scratch = [0.0; 2];
        let expected = (3.0 * 1.0 + 2.0 * 2.0 * 2.0 + 4.0 * 4.0) / 8.0;
        assert!((c.quadratic_form(&v, &mut scratch) - expected).abs() < 1e-14);
    }

    #[test]
    fn serde_as_nested_rows() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn factor_reconstructs_random_spd(entries in prop::collection::vec(-3.0f64..3.0, 16)) {
                // A Aᵀ + I is SPD
                let a = Matrix::from_row_major(4, 4, entries).unwrap();
                let mut spd = a.matmul(&a.transpose()).unwrap();
                for i in 0..4 { spd[(i, i)] += 1.0; }
                let l = cholesky_factor(&spd).unwrap();
                let back = reconstruct(&l);
                prop_assert!(back.max_abs_diff(&spd) <= 1e-10 * spd.frobenius_norm());
            }
        }
    }
}
