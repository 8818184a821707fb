//! The map `B -> Gamma_B`.
//!
//! For a real `K x K` matrix `B`, block `k` of `Gamma_B` is
//!
//! ```text
//! Gamma^k_B = (1/K) sum_i sum_j b_ji C_k C_i^H C_j  -  sum_l b_lk C_l
//! ```
//!
//! and `A(h~) = A(h) B` holds exactly when `Gamma_B H = 0` (with `h~` the lift
//! of `B`). The map is R-linear in `B`, so kernels are computed from its matrix
//! on `vec(B)`.

use crate::embed::{underline, ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};
use crate::ostbc::{ChannelRealization, OstbCode};

fn check_square(code: &OstbCode, b: &RealMatrix) -> Result<()> {
    let k = code.k();
    if b.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{}, code `{}` needs {k}x{k}",
            b.nrows(),
            b.ncols(),
            code.name()
        )));
    }
    Ok(())
}

/// Block `k` (0-based) of `Gamma_B`, an `L x N` complex matrix.
pub fn gamma_k(code: &OstbCode, b: &RealMatrix, k: usize) -> Result<ComplexMatrix> {
    check_square(code, b)?;
    let kk = code.k();
    if k >= kk {
        return Err(Error::IndexOutOfRange { index: k, len: kk });
    }
    let c = code.matrices();
    // sum_i C_i^H (sum_j b_ji C_j), then premultiply by C_k / K
    let mut inner = ComplexMatrix::zeros(code.n(), code.n());
    for i in 0..kk {
        let mut mix = ComplexMatrix::zeros(code.l(), code.n());
        for j in 0..kk {
            let w = b[(j, i)];
            if w != 0.0 {
                mix += c[j].map(|z| z * w);
            }
        }
        inner += c[i].adjoint() * mix;
    }
    let mut out = (&c[k] * inner).map(|z| z / kk as f64);
    for l in 0..kk {
        let w = b[(l, k)];
        if w != 0.0 {
            out -= c[l].map(|z| z * w);
        }
    }
    Ok(out)
}

/// `Gamma_B`: the `LK x N` vertical stack of all blocks.
pub fn gamma(code: &OstbCode, b: &RealMatrix) -> Result<ComplexMatrix> {
    check_square(code, b)?;
    let l = code.l();
    let mut out = ComplexMatrix::zeros(l * code.k(), code.n());
    for k in 0..code.k() {
        out.view_mut((k * l, 0), (l, code.n())).copy_from(&gamma_k(code, b, k)?);
    }
    Ok(out)
}

/// Unit matrix `E_ij` for the column of `vec(B)` with index `col`.
fn unit(k: usize, col: usize) -> RealMatrix {
    let mut e = RealMatrix::zeros(k, k);
    e[(col % k, col / k)] = 1.0;
    e
}

/// Matrix of the R-linear map `vec(B) -> [underline(Gamma^1_B); ...; underline(Gamma^K_B)]`.
///
/// Column `i + K j` is the image of the unit matrix with a one at row `i`,
/// column `j` (0-based), i.e. columns follow the column-major `vec(B)`.
#[derive(Debug, Clone)]
pub struct GammaOperator {
    k: usize,
    matrix: RealMatrix,
}

impl GammaOperator {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }
}

pub fn gamma_operator(code: &OstbCode) -> GammaOperator {
    let k = code.k();
    let block = 2 * code.l() * code.n();
    let mut matrix = RealMatrix::zeros(block * k, k * k);
    for col in 0..k * k {
        let e = unit(k, col);
        for blk in 0..k {
            let g = gamma_k(code, &e, blk).expect("unit matrix is K x K");
            matrix.view_mut((blk * block, col), (block, 1)).copy_from(&underline(&g));
        }
    }
    GammaOperator { k, matrix }
}

/// Matrix of `vec(B) -> [underline(Gamma^1_B H); ...; underline(Gamma^K_B H)]`,
/// shape `(2LKM) x K^2` with the same column order as [`gamma_operator`].
pub fn channel_gamma_operator(code: &OstbCode, channel: &ChannelRealization) -> Result<RealMatrix> {
    if channel.n() != code.n() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} transmit rows, code `{}` has N={}",
            channel.n(),
            code.name(),
            code.n()
        )));
    }
    let k = code.k();
    let h = channel.matrix();
    let block = 2 * code.l() * channel.m();
    let mut matrix = RealMatrix::zeros(block * k, k * k);
    for col in 0..k * k {
        let e = unit(k, col);
        for blk in 0..k {
            let g = gamma_k(code, &e, blk)? * h;
            matrix.view_mut((blk * block, col), (block, 1)).copy_from(&underline(&g));
        }
    }
    Ok(matrix)
}

/// Stacked `underline(Gamma^k_B)` evaluated directly, for comparison with the operator.
pub fn stacked_underline(code: &OstbCode, b: &RealMatrix) -> Result<nalgebra::DVector<f64>> {
    let parts: Result<Vec<_>> = (0..code.k()).map(|k| gamma_k(code, b, k).map(|g| underline(&g))).collect();
    let parts = parts?;
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = nalgebra::DVector::zeros(total);
    let mut offset = 0;
    for p in parts {
        out.rows_mut(offset, p.len()).copy_from(&p);
        offset += p.len();
    }
    Ok(out)
}
