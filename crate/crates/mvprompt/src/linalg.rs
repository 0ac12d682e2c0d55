//! Dense row-major f64 matrices.
//!
//! Deliberately minimal: every numeric kernel in this crate must be
//! bit-reproducible across runs and platforms, so multiplication accumulates
//! in a fixed order (row-major, left to right over the inner dimension) with
//! no blocking, vectorized reassociation, or threading. All entries are f64.

use crate::error::{shape_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn row_vector(values: Vec<f64>) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Matrix product with fixed accumulation order: for each output entry
    /// the inner sum runs k = 0..inner left to right.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(shape_err(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j loop order: each output entry still accumulates its terms in
        // ascending k, so results are bitwise identical to the naive triple
        // loop, but rows are traversed contiguously through slice iterators.
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        }
        Ok(out)
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(shape_err(format!(
                "elementwise op {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(format!(
                "add_assign {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Column sums as a 1 x cols row vector.
    pub fn col_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c] += self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Elementwise logistic function, 1 / (1 + e^-x).
pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction for overflow safety.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for c in 0..x.cols() {
            let e = (row[c] - m).exp();
            out.set(r, c, e);
            denom += e;
        }
        for c in 0..x.cols() {
            let v = out.get(r, c) / denom;
            out.set(r, c, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Independent reference product: different loop nesting, same
    /// left-to-right inner accumulation, so results must agree bitwise.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = vec![vec![0.0f64; b.cols()]; a.rows()];
        for i in 0..a.rows() {
            let mut acc = vec![0.0f64; b.cols()];
            for k in 0..a.cols() {
                // Accumulation per output entry still advances k left to
                // right; only the j traversal is interleaved.
                for (j, slot) in acc.iter_mut().enumerate() {
                    *slot += a.get(i, k) * b.get(k, j);
                }
            }
            out[i] = acc;
        }
        Matrix::from_fn(a.rows(), b.cols(), |i, j| out[i][j])
    }

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform(-2.0, 2.0))
    }

    #[test]
    fn matmul_known_product() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle_bitwise() {
        let mut rng = Rng::new(2024);
        for &(m, k, n) in &[(1, 1, 1), (2, 3, 4), (5, 5, 5), (7, 2, 9), (8, 8, 8)] {
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let got = a.matmul(&b).unwrap();
            let want = matmul_oracle(&a, &b);
            assert_eq!(got.data(), want.data(), "shape {m}x{k} * {k}x{n}");
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("4x2"), "{err}");
    }

    #[test]
    fn matmul_identity_is_exact() {
        let mut rng = Rng::new(3);
        let a = random_matrix(&mut rng, 4, 4);
        let eye = Matrix::from_fn(4, 4, |r, c| if r == c { 1.0 } else { 0.0 });
        assert_eq!(a.matmul(&eye).unwrap().data(), a.data());
    }

    #[test]
    fn sigmoid_fixed_points() {
        let x = Matrix::row_vector(vec![0.0, -(3.0f64.ln()), 50.0, -50.0]);
        let y = sigmoid(&x);
        assert_eq!(y.get(0, 0), 0.5);
        assert!((y.get(0, 1) - 0.25).abs() < 1e-15);
        assert!((y.get(0, 2) - 1.0).abs() < 1e-15);
        assert!(y.get(0, 3) > 0.0 && y.get(0, 3) < 1e-15);
    }

    #[test]
    fn softmax_known_values_and_row_sums() {
        let x = Matrix::row_vector(vec![1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()]);
        let y = softmax_rows(&x);
        assert!((y.get(0, 0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((y.get(0, 1) - 2.0 / 6.0).abs() < 1e-15);
        assert!((y.get(0, 2) - 3.0 / 6.0).abs() < 1e-15);

        let big = Matrix::row_vector(vec![1000.0, 1001.0, 999.0]);
        let yb = softmax_rows(&big);
        assert!(yb.all_finite());
        let s: f64 = yb.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = Rng::new(5);
        let x = random_matrix(&mut rng, 3, 6);
        let shifted = x.map(|v| v + 123.456);
        let a = softmax_rows(&x);
        let b = softmax_rows(&shifted);
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = Rng::new(8);
        let a = random_matrix(&mut rng, 3, 7);
        assert_eq!(a.transpose().transpose().data(), a.data());
    }

    #[test]
    fn col_sums_match_manual() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(a.col_sums().data(), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }
}
