use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Zero-row matrices are allowed so that graphs without edges can flow
/// through the edge pipeline with `K = 0`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and small fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1x1 matrix.
    pub fn item(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Copy of columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        let width = end - start;
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.data[r * width..(r + 1) * width]
                .copy_from_slice(&self.data[r * self.cols + start..r * self.cols + end]);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// Plain product without tape recording.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "left {}x{} does not fit right {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm_nn(self, other, &mut out);
        Ok(out)
    }
}

/// Below this many multiply-adds the packing in `matrixmultiply` costs more
/// than it saves.
const SMALL_GEMM: usize = 8 * 1024;

/// `out += op(a) · op(b)` where each operand is read row-major or, when
/// `transposed`, through swapped strides.
fn gemm(a: &Matrix, a_transposed: bool, b: &Matrix, b_transposed: bool, out: &mut Matrix) {
    let (m, k) = if a_transposed { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if b_transposed { b.rows } else { b.cols };
    debug_assert_eq!(if b_transposed { b.cols } else { b.rows }, k);
    debug_assert_eq!(out.shape(), (m, n));
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let strides = |x: &Matrix, t: bool| if t { (1, x.cols) } else { (x.cols, 1) };
    let (rsa, csa) = strides(a, a_transposed);
    let (rsb, csb) = strides(b, b_transposed);
    if m * n * k <= SMALL_GEMM {
        for i in 0..m {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a.data[i * rsa + p * csa];
                if aip == 0.0 {
                    continue;
                }
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o += aip * b.data[p * rsb + j * csb];
                }
            }
        }
        return;
    }
    // SAFETY: the strides and extents address exactly the elements of `a`,
    // `b` and `out`, and `out` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// out += a · b
pub(crate) fn gemm_nn(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    gemm(a, false, b, false, out);
}

/// out += a · bᵀ
pub(crate) fn gemm_nt(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    gemm(a, false, b, true, out);
}

/// out += aᵀ · b
pub(crate) fn gemm_tn(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    gemm(a, true, b, false, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_transpose_route() {
        let a = Matrix::from_rows(&[[1.0, 2.0, -1.0], [0.5, 3.0, 4.0]]);
        let b = Matrix::from_rows(&[[2.0, 1.0], [0.0, -1.0], [1.5, 2.5]]);
        let ab = a.matmul(&b).unwrap();

        let mut nt = Matrix::zeros(2, 2);
        gemm_nt(&a, &b.transpose(), &mut nt);
        assert_eq!(nt, ab);

        let mut tn = Matrix::zeros(2, 2);
        gemm_tn(&a.transpose(), &b, &mut tn);
        assert_eq!(tn, ab);
    }

    #[test]
    fn slice_cols_and_transpose() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(m.slice_cols(1, 3), Matrix::from_rows(&[[2.0, 3.0], [5.0, 6.0]]));
        assert_eq!(m.transpose().transpose(), m);
        assert_eq!(m.transpose().get(2, 1), 6.0);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(matches!(
            Matrix::from_vec(2, 2, vec![1.0; 3]),
            Err(Error::Shape { .. })
        ));
    }
}
