//! Ambiguity subspaces.
//!
//! The invariant space is `{B | Gamma_B = 0}`; the channel space for a
//! realization `H0` is `{B | Gamma_B H0 = 0}`. Both are returned as
//! Frobenius-orthonormal bases of `K x K` real matrices whose first element is
//! `I_K / sqrt(K)`. Every nonzero member is a positive multiple of an
//! orthogonal matrix, and the non-identity directions form a Hurwitz–Radon
//! family once rescaled.

use serde::Serialize;

use crate::embed::{frobenius_inner, max_principal_angle, null_space, unvec, vec, RealMatrix, RealVector};
use crate::error::{Error, Result};
use crate::gamma::{channel_gamma_operator, gamma_operator};
use crate::ostbc::{ChannelRealization, OstbCode, RealifiedCode};

/// Residual above which the identity is considered missing from a computed span.
const IDENTITY_SPAN_TOL: f64 = 1e-8;

/// Rescaled Hurwitz–Radon candidates must be orthogonal to this accuracy.
const HR_ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SubspaceKind {
    Invariant,
    Channel { m: usize, seed: Option<u64> },
}

#[derive(Debug, Clone)]
pub struct AmbiguitySubspace {
    code: String,
    k: usize,
    kind: SubspaceKind,
    basis: Vec<RealMatrix>,
    tol: f64,
}

impl AmbiguitySubspace {
    /// Builds a normalized basis from any spanning family that contains `I_K`
    /// in its span.
    pub fn from_spanning(
        code: impl Into<String>,
        k: usize,
        kind: SubspaceKind,
        spanning: &[RealMatrix],
        tol: f64,
    ) -> Result<Self> {
        if spanning.iter().any(|b| b.shape() != (k, k)) {
            return Err(Error::DimensionMismatch(format!("spanning matrices must be {k}x{k}")));
        }
        let cols: Vec<RealVector> = spanning.iter().map(vec).collect();
        let q = crate::embed::orthonormal_span(&RealMatrix::from_columns(&cols), 1e-8);
        let basis = normalize_basis(&q, k)?;
        Ok(Self { code: code.into(), k, kind, basis, tol })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> &SubspaceKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Frobenius-orthonormal basis, `I_K / sqrt(K)` first.
    pub fn basis(&self) -> &[RealMatrix] {
        &self.basis
    }

    /// Second-order identifiability: the space is spanned by the identity alone.
    pub fn identifiable(&self) -> bool {
        self.dim() == 1
    }

    /// Records the seed used to draw the channel of a channel subspace.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let SubspaceKind::Channel { seed: s, .. } = &mut self.kind {
            *s = Some(seed);
        }
        self
    }

    /// `K^2 x dim` matrix whose columns are `vec` of the basis elements.
    pub fn basis_matrix(&self) -> RealMatrix {
        let cols: Vec<RealVector> = self.basis.iter().map(vec).collect();
        if cols.is_empty() {
            RealMatrix::zeros(self.k * self.k, 0)
        } else {
            RealMatrix::from_columns(&cols)
        }
    }

    /// Orthogonal projection of `b` onto the span.
    pub fn project(&self, b: &RealMatrix) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.k, self.k);
        for e in &self.basis {
            out += e * frobenius_inner(e, b);
        }
        out
    }

    /// `|B - proj(B)| / |B|` in the Frobenius norm.
    pub fn projection_residual(&self, b: &RealMatrix) -> f64 {
        let n = b.norm();
        if n == 0.0 {
            return 0.0;
        }
        (b - self.project(b)).norm() / n
    }

    /// Largest principal angle to another subspace (`pi/2` when dimensions differ).
    pub fn max_principal_angle(&self, other: &AmbiguitySubspace) -> f64 {
        max_principal_angle(&self.basis_matrix(), &other.basis_matrix())
    }

    /// Equal spans: same dimension and every principal angle at most `angle_tol`.
    pub fn same_span(&self, other: &AmbiguitySubspace, angle_tol: f64) -> bool {
        self.dim() == other.dim() && self.max_principal_angle(other) <= angle_tol
    }

    /// Largest projection residual of `other`'s basis onto this span.
    pub fn containment_residual(&self, other: &AmbiguitySubspace) -> f64 {
        other.basis.iter().map(|b| self.projection_residual(b)).fold(0.0, f64::max)
    }
}

/// Rotates an orthonormal kernel basis (columns are `vec(B)`) into the normal
/// form: `I_K / sqrt(K)` first, then a Frobenius-orthonormal complement with
/// each element's first nonzero entry (row-major scan) positive.
///
/// The complement is built by Gram–Schmidt on the projections of the unit
/// matrices (row-major order) onto the span, so it depends only on the span.
fn normalize_basis(kernel: &RealMatrix, k: usize) -> Result<Vec<RealMatrix>> {
    let d = kernel.ncols();
    let e0 = vec(&RealMatrix::identity(k, k)) / (k as f64).sqrt();
    let coeffs = kernel.transpose() * &e0;
    let residual = (&e0 - kernel * &coeffs).norm();
    if residual > IDENTITY_SPAN_TOL {
        return Err(Error::CorruptedSubspace(format!(
            "identity lies outside the computed span (residual {residual:.3e})"
        )));
    }

    let mut chosen: Vec<RealVector> = vec![e0.clone()];
    for idx in 0..k * k {
        if chosen.len() == d {
            break;
        }
        // row-major unit matrix (r, c) sits at vec index r + k c
        let (r, c) = (idx / k, idx % k);
        let mut unit = RealVector::zeros(k * k);
        unit[r + k * c] = 1.0;
        let mut v = kernel * (kernel.transpose() * unit);
        for _ in 0..2 {
            for u in &chosen {
                let p = u.dot(&v);
                v -= u * p;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            chosen.push(v / n);
        }
    }
    if chosen.len() != d {
        return Err(Error::CorruptedSubspace(format!(
            "could not complete a basis of dimension {d} (found {})",
            chosen.len()
        )));
    }

    chosen
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut b = unvec(&v, k, k)?;
            if i > 0 {
                apply_sign_convention(&mut b);
            } else {
                // exact identity, free of rounding
                b = RealMatrix::identity(k, k) / (k as f64).sqrt();
            }
            Ok(b)
        })
        .collect()
}

fn apply_sign_convention(b: &mut RealMatrix) {
    let scale = b.amax();
    let (rows, cols) = b.shape();
    for r in 0..rows {
        for c in 0..cols {
            let x = b[(r, c)];
            if x.abs() > 1e-8 * scale {
                if x < 0.0 {
                    b.neg_mut();
                }
                return;
            }
        }
    }
}

/// The channel-independent space `{B | Gamma_B = 0}`.
pub fn compute_bstar(code: &OstbCode, tol: f64) -> Result<AmbiguitySubspace> {
    let g = gamma_operator(code);
    let kernel = null_space(g.matrix(), tol)?;
    let basis = normalize_basis(&kernel, code.k())?;
    Ok(AmbiguitySubspace {
        code: code.name().to_string(),
        k: code.k(),
        kind: SubspaceKind::Invariant,
        basis,
        tol,
    })
}

/// The space `{B | Gamma_B H0 = 0}` for one channel realization.
pub fn compute_bspace(code: &OstbCode, channel: &ChannelRealization, tol: f64) -> Result<AmbiguitySubspace> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::NonPositiveTolerance(tol));
    }
    let op = channel_gamma_operator(code, channel)?;
    let kernel = null_space(&op, tol)?;
    let basis = normalize_basis(&kernel, code.k())?;
    Ok(AmbiguitySubspace {
        code: code.name().to_string(),
        k: code.k(),
        kind: SubspaceKind::Channel { m: channel.m(), seed: None },
        basis,
        tol,
    })
}

/// Channel vector `Phi^T ((B^T (x) I_2ML) / K) Phi h0` associated with `B`.
///
/// Block `k` of `(B^T (x) I) Phi h0` is column `k` of `A(h0) B`, so the lift is
/// `(1/K) sum_k Phi_k^T (A(h0) B)_k`.
pub fn lift_to_channel(rc: &RealifiedCode, h0: &RealVector, b: &RealMatrix) -> Result<RealVector> {
    let k = rc.k();
    if b.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!("B must be {k}x{k}")));
    }
    let mixed = rc.build_a(h0)? * b;
    let mut out = RealVector::zeros(rc.channel_len());
    for (i, p) in rc.phi_k().iter().enumerate() {
        out += p.tr_mul(&mixed.column(i));
    }
    Ok(out / k as f64)
}

/// Identity plus a Hurwitz–Radon family spanning an ambiguity subspace.
#[derive(Debug, Clone, Serialize)]
pub struct HurwitzRadonBasis {
    pub k: usize,
    /// Skew-symmetric orthogonal matrices `A_i` with `A_i^2 = -I` that pairwise anticommute.
    #[serde(skip)]
    pub family: Vec<RealMatrix>,
    pub family_size: usize,
    /// `max_i |A_i^T A_i - I|`
    pub max_orthogonality_residual: f64,
    /// `max_i |A_i^T + A_i|`
    pub max_skew_residual: f64,
    /// `max_i |A_i^2 + I|`
    pub max_involution_residual: f64,
    /// `max_{i != j} |A_i A_j + A_j A_i|`
    pub max_anticommute_residual: f64,
}

impl HurwitzRadonBasis {
    pub fn identity(&self) -> RealMatrix {
        RealMatrix::identity(self.k, self.k)
    }
}

/// Hurwitz–Radon function: `rho(2^(4d+c) b) = 2^c + 8d` for odd `b`.
pub fn rho(n: usize) -> usize {
    assert!(n > 0, "rho is defined for positive integers");
    let a = n.trailing_zeros() as usize;
    let (d, c) = (a / 4, a % 4);
    (1 << c) + 8 * d
}

pub fn hr_basis(sub: &AmbiguitySubspace) -> Result<HurwitzRadonBasis> {
    let order: Vec<usize> = (0..sub.dim()).collect();
    hr_basis_ordered(sub, &order)
}

/// Gram–Schmidt within the span starting from `I_K`, visiting the basis in
/// `order`; each new direction is rescaled so that `B^T B = I_K`.
pub fn hr_basis_ordered(sub: &AmbiguitySubspace, order: &[usize]) -> Result<HurwitzRadonBasis> {
    let k = sub.k();
    let eye = RealMatrix::identity(k, k);
    let mut accepted: Vec<RealMatrix> = vec![&eye / (k as f64).sqrt()];
    for &idx in order {
        let Some(b) = sub.basis().get(idx) else {
            return Err(Error::IndexOutOfRange { index: idx, len: sub.dim() });
        };
        let mut v = b.clone();
        for _ in 0..2 {
            for u in &accepted {
                let p = frobenius_inner(u, &v);
                v -= u * p;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            accepted.push(v / n);
        }
    }
    if accepted.len() != sub.dim() {
        return Err(Error::CorruptedSubspace(format!(
            "Gram-Schmidt produced {} elements for a space of dimension {}",
            accepted.len(),
            sub.dim()
        )));
    }

    let scale = (k as f64).sqrt();
    let family: Vec<RealMatrix> = accepted.into_iter().skip(1).map(|b| b * scale).collect();

    let mut max_orth = 0.0f64;
    let mut max_skew = 0.0f64;
    let mut max_inv = 0.0f64;
    let mut max_anti = 0.0f64;
    for (i, a) in family.iter().enumerate() {
        max_orth = max_orth.max((a.transpose() * a - &eye).norm());
        max_skew = max_skew.max((a.transpose() + a).norm());
        max_inv = max_inv.max((a * a + &eye).norm());
        for b in family.iter().skip(i + 1) {
            max_anti = max_anti.max((a * b + b * a).norm());
        }
    }
    // sums B_i + B_j (identity included) must stay orthogonal up to scale,
    // which is what the skew and anticommutation residuals measure
    if max_orth.max(max_skew).max(max_anti) > HR_ORTHOGONALITY_TOL {
        return Err(Error::CorruptedSubspace(format!(
            "span is not orthogonal up to scale: element {max_orth:.3e}, skew {max_skew:.3e}, anticommute {max_anti:.3e}"
        )));
    }
    if family.len() + 1 > rho(k) {
        return Err(Error::CorruptedSubspace(format!(
            "family of size {} exceeds the Hurwitz-Radon bound rho({k}) - 1 = {}",
            family.len(),
            rho(k) - 1
        )));
    }
    Ok(HurwitzRadonBasis {
        k,
        family_size: family.len(),
        family,
        max_orthogonality_residual: max_orth,
        max_skew_residual: max_skew,
        max_involution_residual: max_inv,
        max_anticommute_residual: max_anti,
    })
}

/// Returns `(c, is_rotation)` with `c = tr{B^T B} / K`; `B` is a rotation up to
/// scale when `|B^T B - c I| <= tol c` and `det B > 0`.
pub fn check_pure_rotation(b: &RealMatrix, tol: f64) -> Result<(f64, bool)> {
    if !b.is_square() {
        return Err(Error::DimensionMismatch("B must be square".into()));
    }
    let k = b.nrows();
    let gram = b.transpose() * b;
    let c = gram.trace() / k as f64;
    if c == 0.0 {
        return Err(Error::ZeroInput("matrix"));
    }
    let dev = (gram - RealMatrix::identity(k, k) * c).norm();
    Ok((c, dev <= tol * c && b.determinant() > 0.0))
}

/// JSON form of a subspace together with its Hurwitz–Radon diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SubspaceReport {
    pub code: String,
    pub kind: &'static str,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub dim: usize,
    pub tol: f64,
    /// Each element flattened row-major.
    pub basis: Vec<Vec<f64>>,
    pub hr: HrSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct HrSummary {
    pub family_size: usize,
    pub max_skew_residual: f64,
    pub max_anticommute_residual: f64,
}

impl SubspaceReport {
    pub fn new(sub: &AmbiguitySubspace, hr: &HurwitzRadonBasis) -> Self {
        let (kind, m, seed) = match sub.kind() {
            SubspaceKind::Invariant => ("invariant", None, None),
            SubspaceKind::Channel { m, seed } => ("channel", Some(*m), *seed),
        };
        let basis = sub
            .basis()
            .iter()
            .map(|b| b.transpose().as_slice().to_vec())
            .collect();
        Self {
            code: sub.code().to_string(),
            kind,
            m,
            seed,
            dim: sub.dim(),
            tol: sub.tol(),
            basis,
            hr: HrSummary {
                family_size: hr.family_size,
                max_skew_residual: hr.max_skew_residual,
                max_anticommute_residual: hr.max_anticommute_residual,
            },
        }
    }
}
