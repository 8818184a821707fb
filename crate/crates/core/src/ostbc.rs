//! Orthogonal space-time block codes and their realified operators.
//!
//! A code is a list of `K` complex `L x N` coefficient matrices `C_k` with
//! `C_k^H C_k = I_N` and `C_i^H C_j + C_j^H C_i = 0` for `i != j`. The codeword
//! for a real symbol vector `s` is `X(s) = sum_k s_k C_k`.
//!
//! For `M` receive antennas, `Phi_k = I_M (x) overline(C_k)` maps the channel
//! vector `h = underline(H)` to `underline(C_k H)`, and `A(h) = [Phi_1 h ... Phi_K h]`
//! is the real `2ML x K` matrix with `underline(X(s) H) = A(h) s`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{kron, overline, underline, ComplexMatrix, RealMatrix, RealVector, C64};
use crate::error::{Error, Result};

/// Tolerance used when a code is validated at construction.
pub const DEFAULT_CODE_TOL: f64 = 1e-10;

/// Names accepted by [`builtin_code`].
pub const BUILTIN_CODES: [&str; 5] = ["alamouti", "alamouti-k3", "alamouti-k2", "scalar", "real2"];

#[derive(Debug, Clone, PartialEq)]
pub struct OstbCode {
    name: String,
    n: usize,
    l: usize,
    matrices: Vec<ComplexMatrix>,
}

impl OstbCode {
    /// Builds a code and validates it eagerly at [`DEFAULT_CODE_TOL`].
    pub fn new(name: impl Into<String>, n: usize, l: usize, matrices: Vec<ComplexMatrix>) -> Result<Self> {
        let name = name.into();
        if n == 0 || l == 0 || matrices.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "code `{name}` needs N, L >= 1 and at least one coefficient matrix"
            )));
        }
        for (k, c) in matrices.iter().enumerate() {
            if c.shape() != (l, n) {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient matrix {k} of `{name}` is {}x{}, expected {l}x{n}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        let report = validate_matrices(n, &matrices, DEFAULT_CODE_TOL);
        if !report.passed {
            return Err(Error::InvalidCode {
                name,
                norm_dev: report.norm_deviation,
                cross_dev: report.cross_deviation,
            });
        }
        Ok(Self { name, n, l, matrices })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Transmit antennas.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Block length in time slots.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of real symbols per block.
    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }

    pub fn validate(&self, tol: f64) -> Result<ValidationReport> {
        validate_code(self, tol)
    }

    pub fn to_definition(&self) -> CodeDefinition {
        CodeDefinition {
            name: self.name.clone(),
            n: self.n,
            l: self.l,
            k: self.k(),
            c: self
                .matrices
                .iter()
                .map(|m| {
                    (0..self.l)
                        .map(|i| (0..self.n).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

/// JSON wire form of a code: `C[k][row][col] = [re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeDefinition {
    pub name: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "C")]
    pub c: Vec<Vec<Vec<[f64; 2]>>>,
}

impl CodeDefinition {
    /// Checks the payload against the declared `(N, L, K)` and converts to matrices.
    pub fn to_matrices(&self) -> Result<Vec<ComplexMatrix>> {
        if self.c.len() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "declared K={} but {} matrices given",
                self.k,
                self.c.len()
            )));
        }
        self.c
            .iter()
            .enumerate()
            .map(|(k, rows)| {
                if rows.len() != self.l {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix {k}: declared L={} but {} rows given",
                        self.l,
                        rows.len()
                    )));
                }
                if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != self.n) {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix {k} row {i}: declared N={} but {} entries given",
                        self.n,
                        row.len()
                    )));
                }
                Ok(ComplexMatrix::from_fn(self.l, self.n, |i, j| {
                    C64::new(rows[i][j][0], rows[i][j][1])
                }))
            })
            .collect()
    }

    pub fn into_code(self) -> Result<OstbCode> {
        let matrices = self.to_matrices()?;
        OstbCode::new(self.name, self.n, self.l, matrices)
    }
}

/// Reads a JSON code definition, checks its dimensions and validates it.
pub fn load_code(path: impl AsRef<Path>) -> Result<OstbCode> {
    load_definition(path)?.into_code()
}

/// Reads a JSON code definition without validating orthogonality.
pub fn load_definition(path: impl AsRef<Path>) -> Result<CodeDefinition> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_code(code: &OstbCode, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&code.to_definition())?;
    fs::write(path, text)?;
    Ok(())
}

fn real(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(rows, cols, &entries.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
}

fn imag(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(rows, cols, &entries.iter().map(|&x| C64::new(0.0, x)).collect::<Vec<_>>())
}

fn alamouti_matrices() -> Vec<ComplexMatrix> {
    vec![
        real(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        imag(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        real(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        imag(2, 2, &[0.0, 1.0, 1.0, 0.0]),
    ]
}

/// Registry of built-in codes.
///
/// `alamouti-k3` and `alamouti-k2` keep the first three and two Alamouti
/// matrices; any subset of an orthogonal family is again orthogonal.
pub fn builtin_code(name: &str) -> Result<OstbCode> {
    match name {
        "alamouti" => OstbCode::new(name, 2, 2, alamouti_matrices()),
        "alamouti-k3" => OstbCode::new(name, 2, 2, alamouti_matrices()[..3].to_vec()),
        "alamouti-k2" => OstbCode::new(name, 2, 2, alamouti_matrices()[..2].to_vec()),
        "scalar" => OstbCode::new(name, 1, 1, vec![real(1, 1, &[1.0])]),
        "real2" => OstbCode::new(
            name,
            2,
            2,
            vec![real(2, 2, &[1.0, 0.0, 0.0, 1.0]), real(2, 2, &[0.0, 1.0, -1.0, 0.0])],
        ),
        other => Err(Error::UnknownCode(other.to_string())),
    }
}

/// Deviation of a coefficient family from the orthogonality constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `max_k max|C_k^H C_k - I_N|`
    pub norm_deviation: f64,
    /// `max_{i != j} max|C_i^H C_j + C_j^H C_i|`
    pub cross_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn validate_code(code: &OstbCode, tol: f64) -> Result<ValidationReport> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::NonPositiveTolerance(tol));
    }
    Ok(validate_matrices(code.n, &code.matrices, tol))
}

/// Same check as [`validate_code`] on a raw family, which may be invalid.
pub fn validate_matrices(n: usize, matrices: &[ComplexMatrix], tol: f64) -> ValidationReport {
    let eye = ComplexMatrix::identity(n, n);
    let mut norm_deviation = 0.0f64;
    let mut cross_deviation = 0.0f64;
    for (i, ci) in matrices.iter().enumerate() {
        let gram = ci.adjoint() * ci;
        if gram.shape() != (n, n) {
            return ValidationReport { norm_deviation: f64::INFINITY, cross_deviation, tol, passed: false };
        }
        norm_deviation = norm_deviation.max(max_abs(&(gram - &eye)));
        for cj in matrices.iter().skip(i + 1) {
            let cross = ci.adjoint() * cj + cj.adjoint() * ci;
            cross_deviation = cross_deviation.max(max_abs(&cross));
        }
    }
    ValidationReport {
        norm_deviation,
        cross_deviation,
        tol,
        passed: norm_deviation <= tol && cross_deviation <= tol,
    }
}

fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `X(s) = sum_k s_k C_k`.
pub fn encode(code: &OstbCode, s: &[f64]) -> Result<ComplexMatrix> {
    if s.len() != code.k() {
        return Err(Error::DimensionMismatch(format!(
            "symbol vector has length {}, code `{}` expects K={}",
            s.len(),
            code.name,
            code.k()
        )));
    }
    let mut x = ComplexMatrix::zeros(code.l, code.n);
    for (&sk, ck) in s.iter().zip(&code.matrices) {
        x += ck.map(|z| z * sk);
    }
    Ok(x)
}

/// A complex channel matrix `H0` (`N x M`) together with `h0 = underline(H0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    matrix: ComplexMatrix,
    vector: RealVector,
}

impl ChannelRealization {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let vector = underline(&matrix);
        if vector.norm() == 0.0 {
            return Err(Error::ZeroInput("channel matrix"));
        }
        Ok(Self { matrix, vector })
    }

    /// Transmit antennas.
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Receive antennas.
    pub fn m(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn vector(&self) -> &RealVector {
        &self.vector
    }

    /// Same channel with one more receive antenna.
    pub fn with_extra_column(&self, column: &[C64]) -> Result<Self> {
        if column.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "extra column has length {}, expected {}",
                column.len(),
                self.n()
            )));
        }
        let m = self.m();
        let mut matrix = self.matrix.clone().resize_horizontally(m + 1, C64::new(0.0, 0.0));
        for (i, &z) in column.iter().enumerate() {
            matrix[(i, m)] = z;
        }
        Self::new(matrix)
    }
}

/// A code together with its realified operators for `M` receive antennas.
#[derive(Debug, Clone)]
pub struct RealifiedCode {
    code: OstbCode,
    m: usize,
    phi_k: Vec<RealMatrix>,
    phi: RealMatrix,
}

pub fn realify(code: &OstbCode, m: usize) -> Result<RealifiedCode> {
    if m < 1 {
        return Err(Error::InvalidArgument("receive antenna count must be at least 1".into()));
    }
    let eye = RealMatrix::identity(m, m);
    let phi_k: Vec<RealMatrix> = code.matrices.iter().map(|c| kron(&eye, &overline(c))).collect();
    let rows = 2 * m * code.l;
    let cols = 2 * m * code.n;
    let mut phi = RealMatrix::zeros(rows * code.k(), cols);
    for (k, p) in phi_k.iter().enumerate() {
        phi.view_mut((k * rows, 0), (rows, cols)).copy_from(p);
    }
    Ok(RealifiedCode { code: code.clone(), m, phi_k, phi })
}

impl RealifiedCode {
    pub fn code(&self) -> &OstbCode {
        &self.code
    }

    /// Receive antennas.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.code.k()
    }

    /// Length `2ML` of a realified received block.
    pub fn block_len(&self) -> usize {
        2 * self.m * self.code.l
    }

    /// Length `2MN` of a channel vector.
    pub fn channel_len(&self) -> usize {
        2 * self.m * self.code.n
    }

    pub fn phi_k(&self) -> &[RealMatrix] {
        &self.phi_k
    }

    /// Vertical stack of all `Phi_k`.
    pub fn phi(&self) -> &RealMatrix {
        &self.phi
    }

    fn check_channel(&self, h: &RealVector) -> Result<()> {
        if h.len() != self.channel_len() {
            return Err(Error::DimensionMismatch(format!(
                "channel vector has length {}, expected 2MN={}",
                h.len(),
                self.channel_len()
            )));
        }
        Ok(())
    }

    /// `A(h) = [Phi_1 h ... Phi_K h]`, a `2ML x K` matrix with `A(h)^T A(h) = |h|^2 I_K`.
    pub fn build_a(&self, h: &RealVector) -> Result<RealMatrix> {
        self.check_channel(h)?;
        let cols: Vec<RealVector> = self.phi_k.iter().map(|p| p * h).collect();
        Ok(RealMatrix::from_columns(&cols))
    }
}

/// Free-function form of [`RealifiedCode::build_a`].
pub fn build_a(rc: &RealifiedCode, h: &RealVector) -> Result<RealMatrix> {
    rc.build_a(h)
}
