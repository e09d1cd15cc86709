//! Dense eigensolvers and linear solves on complex matrices.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Eigenvectors whose matrix condition number exceeds this are reported as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

#[derive(Clone, Debug)]
pub struct GeneralEigen {
    pub values: Vec<C64>,
    /// Unit-norm right eigenvectors as columns.
    pub right: DMatrix<C64>,
    /// Left eigenvectors as columns, biorthogonal to `right` (`left^dag right = 1`).
    pub left: DMatrix<C64>,
    /// 2-norm condition number of `right`.
    pub condition: f64,
    /// Largest `|A v - lambda v| / |A|` over the returned pairs.
    pub max_residual: f64,
}

impl GeneralEigen {
    pub fn is_defective(&self) -> bool {
        !self.condition.is_finite()
            || self.condition > DEFECTIVE_CONDITION
            || self.max_residual > 1e-8
    }
}

/// Eigen-decomposition of a general complex matrix.
///
/// Eigenvalues come from the complex Schur form. Eigenvectors are taken
/// from the numerical null space of `A - lambda I` per cluster of
/// (numerically) equal eigenvalues, which keeps exactly degenerate pairs
/// well conditioned.
pub fn eig_general(a: &DMatrix<C64>) -> GeneralEigen {
    let n = a.nrows();
    assert!(a.is_square());
    if n == 0 {
        return GeneralEigen {
            values: vec![],
            right: DMatrix::zeros(0, 0),
            left: DMatrix::zeros(0, 0),
            condition: 1.0,
            max_residual: 0.0,
        };
    }
    let schur = Schur::new(a.clone());
    let (_, t) = schur.unpack();
    let raw: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    let scale = a.norm().max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-9 * scale;
    let mut assigned = vec![false; n];
    let mut values = Vec::with_capacity(n);
    let mut right = DMatrix::zeros(n, n);
    let mut col = 0;
    let mut max_residual = 0.0f64;
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| !assigned[j] && (raw[j] - raw[i]).norm() <= cluster_tol)
            .collect();
        for &j in &members {
            assigned[j] = true;
        }
        let m = members.len();
        let mean = members.iter().map(|&j| raw[j]).sum::<C64>() / m as f64;
        let shifted = a - DMatrix::identity(n, n) * mean;
        let basis = null_space(&shifted, m);
        // Within a cluster, refine each value with the Rayleigh quotient of its vector.
        for k in 0..m {
            let v = basis.column(k).into_owned();
            let lambda = if m == 1 {
                raw[members[0]]
            } else {
                v.dotc(&(a * &v))
            };
            max_residual = max_residual.max((a * &v - &v * lambda).norm() / scale);
            values.push(lambda);
            right.set_column(col, &v);
            col += 1;
        }
    }

    let (left, condition) = match right.clone().try_inverse() {
        Some(inv) => {
            let cond = two_norm(&right) * two_norm(&inv);
            (inv.adjoint(), cond)
        }
        None => (DMatrix::zeros(n, n), f64::INFINITY),
    };

    GeneralEigen {
        values,
        right,
        left,
        condition,
        max_residual,
    }
}

/// The `m` right singular vectors of `a` with the smallest singular values.
fn null_space(a: &DMatrix<C64>, m: usize) -> DMatrix<C64> {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let mut out = DMatrix::zeros(n, m);
    for (k, &idx) in order.iter().take(m).enumerate() {
        let row = v_t.row(idx);
        let mut v: DVector<C64> = row.adjoint();
        let norm = v.norm();
        v /= C64::new(norm, 0.0);
        out.set_column(k, &v);
    }
    out
}

fn two_norm(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Eigenvalues (ascending) and eigenvectors of a hermitian matrix.
pub fn eig_hermitian(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let herm = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Solve `A x = b` by LU decomposition.
pub fn solve(a: DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>> {
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("LU factorisation found a zero pivot".into()))
}
