//! Dense complex operators and the CSR form used inside the integrator.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::FockSpace;

pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense complex matrix acting on a [`FockSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexOperator {
    matrix: DMatrix<C64>,
    hermitian: bool,
    diagonal: bool,
}

impl ComplexOperator {
    pub fn zeros(space: &FockSpace) -> Self {
        Self::from_matrix_unchecked(DMatrix::zeros(space.dim(), space.dim())).with_flags(true, true)
    }

    pub fn identity(space: &FockSpace) -> Self {
        Self::from_matrix_unchecked(DMatrix::identity(space.dim(), space.dim())).with_flags(true, true)
    }

    /// Wrap a matrix after checking it is square and sized for `space`.
    pub fn from_matrix(space: &FockSpace, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::SizeMismatch {
                expected: space.dim(),
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self::from_matrix_unchecked(matrix))
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        debug_assert!(matrix.is_square());
        ComplexOperator {
            matrix,
            hermitian: false,
            diagonal: false,
        }
    }

    pub(crate) fn with_flags(mut self, hermitian: bool, diagonal: bool) -> Self {
        self.hermitian = hermitian;
        self.diagonal = diagonal;
        self
    }

    /// Set the hermitian flag, verifying `max |A - A^dag| < 1e-12`.
    pub fn mark_hermitian(mut self) -> Result<Self> {
        let dev = self.hermiticity_deviation();
        if dev >= HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!(
                "operator is not hermitian (max |A - A^dag| = {dev:.3e})"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn adjoint(&self) -> Self {
        ComplexOperator {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
            diagonal: self.diagonal,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        let hermitian = self.hermitian && s.im == 0.0;
        ComplexOperator {
            matrix: &self.matrix * s,
            hermitian,
            diagonal: self.diagonal,
        }
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.matrix * v
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// `<bra| A |ket>`
    pub fn matrix_element(&self, bra: &DVector<C64>, ket: &DVector<C64>) -> C64 {
        bra.dotc(&(&self.matrix * ket))
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        SparseMatrix::from_dense(&self.matrix, 0.0)
    }
}

impl<'a> Add<&'a ComplexOperator> for &'a ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: &ComplexOperator) -> ComplexOperator {
        ComplexOperator {
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
            diagonal: self.diagonal && rhs.diagonal,
        }
    }
}

impl<'a> Sub<&'a ComplexOperator> for &'a ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: &ComplexOperator) -> ComplexOperator {
        ComplexOperator {
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
            diagonal: self.diagonal && rhs.diagonal,
        }
    }
}

impl<'a> Mul<&'a ComplexOperator> for &'a ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: &ComplexOperator) -> ComplexOperator {
        ComplexOperator {
            matrix: &self.matrix * &rhs.matrix,
            hermitian: false,
            diagonal: self.diagonal && rhs.diagonal,
        }
    }
}

/// Compressed sparse row matrix. Products act on column-major dense buffers.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    pub fn from_dense(m: &DMatrix<C64>, drop_below: f64) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v.norm() > drop_below {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// `out += alpha * A * rho` with `rho`, `out` column-major `dim x dim`.
    pub fn mul_left_acc(&self, alpha: C64, rho: &[C64], out: &mut [C64]) {
        let n = self.dim;
        for c in 0..n {
            let col = &rho[c * n..(c + 1) * n];
            let dst = &mut out[c * n..(c + 1) * n];
            for r in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * col[self.cols[k]];
                }
                dst[r] += alpha * acc;
            }
        }
    }

    /// `out += alpha * rho * A^dag`.
    pub fn mul_right_adjoint_acc(&self, alpha: C64, rho: &[C64], out: &mut [C64]) {
        let n = self.dim;
        // column c of rho A^dag = sum_k conj(A[c,k]) * column k of rho
        for c in 0..n {
            for k in self.row_ptr[c]..self.row_ptr[c + 1] {
                let w = alpha * self.vals[k].conj();
                let src = self.cols[k];
                let src_col = &rho[src * n..(src + 1) * n];
                let dst_col = &mut out[c * n..(c + 1) * n];
                for (d, s) in dst_col.iter_mut().zip(src_col) {
                    *d += w * s;
                }
            }
        }
    }

    /// `out += alpha * A rho A^dag`, using `scratch` (len dim^2) as workspace.
    pub fn sandwich_acc(&self, alpha: C64, rho: &[C64], scratch: &mut [C64], out: &mut [C64]) {
        scratch.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        self.mul_left_acc(C64::new(1.0, 0.0), rho, scratch);
        self.mul_right_adjoint_acc(alpha, scratch, out);
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}
