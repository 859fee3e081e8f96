//! Minimal dense row-major matrices on top of `matrixmultiply`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot be a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
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
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Copies the listed rows into a new matrix.
    pub fn gather_rows(&self, rows: &[u32]) -> Matrix<T> {
        let mut out = Matrix::zeros(rows.len(), self.cols);
        for (dst, &r) in rows.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(r as usize));
        }
        out
    }
}

/// Operand orientation for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

fn oriented<T>(m: &Matrix<T>, op: Op) -> (usize, usize, isize, isize) {
    let (r, c) = (m.rows, m.cols);
    match op {
        Op::N => (r, c, c as isize, 1),
        Op::T => (c, r, 1, c as isize),
    }
}

/// `c <- alpha * op(a) * op(b) + beta * c`.
pub fn gemm<T: Scalar>(alpha: T, a: &Matrix<T>, op_a: Op, b: &Matrix<T>, op_b: Op, beta: T, c: &mut Matrix<T>) {
    let (m, k, rsa, csa) = oriented(a, op_a);
    let (k2, n, rsb, csb) = oriented(b, op_b);
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape differs");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: shapes were checked above and all buffers are exactly
    // rows * cols long with the strides derived from those shapes.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// `a * b^T`, the usual layout for a batch of rows times a weight matrix.
pub fn matmul_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut c = Matrix::zeros(a.rows, b.rows);
    gemm(T::one(), a, Op::N, b, Op::T, T::zero(), &mut c);
    c
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
