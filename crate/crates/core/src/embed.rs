//! Complex-to-real embeddings and the dense tensor helpers used throughout.
//!
//! `underline` flattens a complex matrix into a real vector by stacking the
//! real part above the imaginary part and vectorizing column by column.
//! `overline` maps a complex matrix to the real block matrix
//! `[[Re A, -Im A], [Im A, Re A]]`, which turns complex products into real ones.

use nalgebra::{Complex, DMatrix, DVector, Scalar, SVD};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type RealVector = DVector<f64>;

/// Default relative singular-value threshold for kernel detection.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Column-major vectorization.
pub fn vec<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    // nalgebra storage is column-major already
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape length {} into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Real vector of length `2mn`: for each column, its real parts followed by its imaginary parts.
pub fn underline(p: &ComplexMatrix) -> RealVector {
    let (m, n) = p.shape();
    let mut out = RealVector::zeros(2 * m * n);
    for j in 0..n {
        let base = 2 * m * j;
        for i in 0..m {
            let z = p[(i, j)];
            out[base + i] = z.re;
            out[base + m + i] = z.im;
        }
    }
    out
}

/// Inverse of [`underline`] for an `m x n` target.
pub fn from_underline(v: &RealVector, m: usize, n: usize) -> Result<ComplexMatrix> {
    if v.len() != 2 * m * n {
        return Err(Error::DimensionMismatch(format!(
            "underline vector of length {} does not match {}x{} complex matrix",
            v.len(),
            m,
            n
        )));
    }
    Ok(ComplexMatrix::from_fn(m, n, |i, j| {
        let base = 2 * m * j;
        C64::new(v[base + i], v[base + m + i])
    }))
}

/// Real `2m x 2n` representation `[[Re A, -Im A], [Im A, Re A]]`.
pub fn overline(a: &ComplexMatrix) -> RealMatrix {
    let (m, n) = a.shape();
    let mut out = RealMatrix::zeros(2 * m, 2 * n);
    for j in 0..n {
        for i in 0..m {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i, n + j)] = -z.im;
            out[(m + i, j)] = z.im;
            out[(m + i, n + j)] = z.re;
        }
    }
    out
}

/// Lifts a real matrix into the complex container with zero imaginary part.
pub fn complexify(a: &RealMatrix) -> ComplexMatrix {
    a.map(|x| C64::new(x, 0.0))
}

/// Kronecker product.
pub fn kron(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    a.kronecker(b)
}

/// Orthonormal basis (as columns) of the numerical kernel of `m`.
///
/// A right singular vector belongs to the kernel when its singular value is at
/// most `rel_tol * sigma_max`. A zero matrix returns the full identity basis.
pub fn null_space(m: &RealMatrix, rel_tol: f64) -> Result<RealMatrix> {
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(Error::NonPositiveTolerance(rel_tol));
    }
    let cols = m.ncols();
    if cols == 0 {
        return Ok(RealMatrix::zeros(0, 0));
    }
    let sigma_max = singular_values(m).iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(RealMatrix::identity(cols, cols));
    }

    // The thin SVD only yields min(rows, cols) right singular vectors; zero rows
    // complete V without changing the kernel.
    let padded = if m.nrows() < cols {
        let mut p = RealMatrix::zeros(cols, cols);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let cutoff = rel_tol * sigma_max;
    let kernel: Vec<RealVector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if kernel.is_empty() {
        return Ok(RealMatrix::zeros(cols, 0));
    }
    Ok(RealMatrix::from_columns(&kernel))
}

/// Singular values in descending order.
pub fn singular_values(m: &RealMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal basis for the column span of `m`, dropping directions whose
/// singular value is below `rel_tol * sigma_max`.
pub fn orthonormal_span(m: &RealMatrix, rel_tol: f64) -> RealMatrix {
    if m.ncols() == 0 || m.nrows() == 0 {
        return RealMatrix::zeros(m.nrows(), 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("requested left singular vectors");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return RealMatrix::zeros(m.nrows(), 0);
    }
    let cols: Vec<RealVector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * sigma_max)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        RealMatrix::zeros(m.nrows(), 0)
    } else {
        RealMatrix::from_columns(&cols)
    }
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal bases.
///
/// Angles come from the sines, i.e. singular values of the component of the
/// smaller basis orthogonal to the larger one, which stays accurate near zero.
/// Only `min(dim a, dim b)` angles exist.
pub fn principal_angles(a: &RealMatrix, b: &RealMatrix) -> Vec<f64> {
    let (small, large) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    if small.ncols() == 0 {
        return Vec::new();
    }
    let residual = small - large * (large.transpose() * small);
    let mut angles: Vec<f64> = residual
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0).asin())
        .collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    angles
}

/// Largest principal angle between two spans, or `pi/2` when the dimensions differ.
pub fn max_principal_angle(a: &RealMatrix, b: &RealMatrix) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

/// Frobenius inner product `tr{A^T B}`.
pub fn frobenius_inner(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.component_mul(b).sum()
}
