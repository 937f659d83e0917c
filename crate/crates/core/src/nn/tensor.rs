//! Dense row-major matrices and the handful of kernels the classifier needs.
//!
//! All reductions accumulate sequentially in index order so that results are
//! bit-reproducible for a given build.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type the engine runs in: `f32` for inference and training, `f64`
/// for numerical gradient checks.
pub trait Real: Float + AddAssign + SubAssign + MulAssign + DivAssign + Default + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape/data mismatch");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn cast<G: Real>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix<F>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: F) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Mean over rows, as a single row.
    pub fn mean_rows(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = F::of(self.rows as f64);
        for o in &mut out {
            *o /= n;
        }
        out
    }
}

/// `a (m x k) * b (k x n)`.
pub fn matmul<F: Real>(a: &Matrix<F>, b: &Matrix<F>) -> Matrix<F> {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a^T (k x m) * b (m x n)`, accumulated into `out (k x n)`.
pub fn matmul_at_b_acc<F: Real>(a: &Matrix<F>, b: &Matrix<F>, out: &mut Matrix<F>) {
    assert_eq!(a.rows, b.rows, "matmul_at_b shared dimension");
    assert_eq!((out.rows, out.cols), (a.cols, b.cols), "matmul_at_b output shape");
    let n = b.cols;
    for i in 0..a.rows {
        let b_row = b.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            let out_row = &mut out.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `a (m x k) * b^T` where `b` is `n x k`.
pub fn matmul_a_bt<F: Real>(a: &Matrix<F>, b: &Matrix<F>) -> Matrix<F> {
    assert_eq!(a.cols, b.cols, "matmul_a_bt inner dimension");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(a_row, b.row(j));
        }
    }
    out
}

#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// In-place numerically stable softmax.
pub fn softmax_in_place<F: Real>(v: &mut [F]) {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, v.to_vec())
    }

    #[test]
    fn matmul_variants_agree() {
        let a = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = m(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);

        let bt = m(2, 3, &[7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        assert_eq!(matmul_a_bt(&a, &bt).data, c.data);

        let at = m(3, 2, &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let mut acc = Matrix::zeros(2, 2);
        matmul_at_b_acc(&at, &b, &mut acc);
        assert_eq!(acc.data, c.data);
    }

    #[test]
    fn softmax_equal_scores() {
        let mut v = [3.0f32; 4];
        softmax_in_place(&mut v);
        assert!(v.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let mut a = [1000.0f64, 1001.0, 999.0];
        let mut b = [0.0f64, 1.0, -1.0];
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_rows() {
        let a = m(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(a.mean_rows(), vec![2.0, 4.0]);
    }
}
