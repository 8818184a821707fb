//! Simulated MIMO link and the relaxed-ML blind channel estimator.
//!
//! With `y = A(h0) s + underline(W)`, the relaxed estimator maximizes
//! `tr{A(h)^T R A(h)} / |h|^2`. Because `tr{A(h)^T R A(h)} = h^T Q_R h` with
//! `Q_R = sum_k Phi_k^T R Phi_k`, the maximizer is a dominant eigenvector of
//! `Q_R`. The estimate is only defined up to the ambiguity space, so it is
//! reported unit-norm and compared through `A(h_hat/|h_hat|) = A(h0/|h0|) B`.

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::Serialize;

use crate::embed::{orthonormal_span, RealMatrix, RealVector};
use crate::error::{Error, Result};
use crate::ostbc::{realify, ChannelRealization, OstbCode, RealifiedCode};
use crate::random::{gaussian_channel, normal, trial_rng};
use crate::subspace::{compute_bspace, lift_to_channel, AmbiguitySubspace};

/// Relative tolerance used to group the top eigenvalues of `Q_R`.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstellationKind {
    /// Independent uniform `+-1` symbols.
    IidUniformPm1,
    /// Independent standard Gaussian symbols.
    Gaussian,
    /// Zero-mean Gaussian symbols with the given second-moment matrix.
    Correlated,
}

/// Statistics of the transmitted symbol vector, `E[s s^T] = Sigma = U diag(lambda) U^T`.
#[derive(Debug, Clone)]
pub struct ConstellationModel {
    kind: ConstellationKind,
    sigma: RealMatrix,
    eigenvectors: RealMatrix,
    eigenvalues: RealVector,
    cholesky: RealMatrix,
}

impl ConstellationModel {
    pub fn iid_pm1(k: usize) -> Self {
        Self::from_sigma(ConstellationKind::IidUniformPm1, RealMatrix::identity(k, k)).expect("identity is SPD")
    }

    pub fn gaussian(k: usize) -> Self {
        Self::from_sigma(ConstellationKind::Gaussian, RealMatrix::identity(k, k)).expect("identity is SPD")
    }

    /// Gaussian symbols with second moment `sigma`, which must be symmetric positive definite.
    pub fn correlated(sigma: RealMatrix) -> Result<Self> {
        Self::from_sigma(ConstellationKind::Correlated, sigma)
    }

    fn from_sigma(kind: ConstellationKind, sigma: RealMatrix) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::DimensionMismatch("second-moment matrix must be square".into()));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("second-moment matrix is not symmetric ({asym:.3e})")));
        }
        let (eigenvalues, eigenvectors) = sorted_eigen(&sigma);
        if eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidArgument("second-moment matrix is not positive definite".into()));
        }
        let cholesky = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("second-moment matrix is not positive definite".into()))?
            .l();
        Ok(Self { kind, sigma, eigenvectors, eigenvalues, cholesky })
    }

    pub fn kind(&self) -> &ConstellationKind {
        &self.kind
    }

    pub fn k(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &RealMatrix {
        &self.sigma
    }

    /// Orthogonal `U` with `Sigma = U diag(lambda) U^T`, eigenvalues descending.
    pub fn eigenvectors(&self) -> &RealMatrix {
        &self.eigenvectors
    }

    pub fn eigenvalues(&self) -> &RealVector {
        &self.eigenvalues
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RealVector {
        let k = self.k();
        match self.kind {
            ConstellationKind::IidUniformPm1 => {
                RealVector::from_fn(k, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
            }
            ConstellationKind::Gaussian => RealVector::from_fn(k, |_, _| normal(rng)),
            ConstellationKind::Correlated => {
                let z = RealVector::from_fn(k, |_, _| normal(rng));
                &self.cholesky * z
            }
        }
    }
}

/// Eigenvalues in descending order with matching eigenvector columns.
pub(crate) fn sorted_eigen(m: &RealMatrix) -> (RealVector, RealMatrix) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = RealVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = RealMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub code: OstbCode,
    /// Receive antennas.
    pub m: usize,
    pub constellation: ConstellationModel,
    /// Number of received blocks `J`.
    pub blocks: usize,
    /// Noise variance per complex dimension.
    pub sigma2: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidArgument("receive antenna count must be at least 1".into()));
        }
        if self.blocks < 1 {
            return Err(Error::InvalidArgument("block count must be at least 1".into()));
        }
        if self.sigma2.is_nan() || self.sigma2 < 0.0 {
            return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {}", self.sigma2)));
        }
        if self.constellation.k() != self.code.k() {
            return Err(Error::DimensionMismatch(format!(
                "constellation has dimension {}, code needs K={}",
                self.constellation.k(),
                self.code.k()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// Realified received blocks, each of length `2ML`.
    pub blocks: Vec<RealVector>,
    /// Transmitted symbol vectors.
    pub symbols: Vec<RealVector>,
    pub channel: ChannelRealization,
}

/// Draws `H0`, then for every block a symbol vector and the noise.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationOutput> {
    config.validate()?;
    let rc = realify(&config.code, config.m)?;
    let mut rng = trial_rng(config.seed, 0);
    let channel = gaussian_channel(config.code.n(), config.m, &mut rng);
    let a = rc.build_a(channel.vector())?;
    let noise_std = (config.sigma2 / 2.0).sqrt();
    let len = rc.block_len();

    let mut blocks = Vec::with_capacity(config.blocks);
    let mut symbols = Vec::with_capacity(config.blocks);
    for _ in 0..config.blocks {
        let s = config.constellation.sample(&mut rng);
        let mut y = &a * &s;
        if noise_std > 0.0 {
            for i in 0..len {
                y[i] += noise_std * normal(&mut rng);
            }
        }
        blocks.push(y);
        symbols.push(s);
    }
    Ok(SimulationOutput { blocks, symbols, channel })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CovarianceSource {
    Theoretical,
    Sample { blocks: usize },
}

/// Second moment of the realified received blocks.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    pub r: RealMatrix,
    pub source: CovarianceSource,
}

/// `R = A(h0) Sigma A(h0)^T + (sigma2 / 2) I`.
pub fn theoretical_r(
    rc: &RealifiedCode,
    h0: &RealVector,
    constellation: &ConstellationModel,
    sigma2: f64,
) -> Result<CovarianceModel> {
    if sigma2.is_nan() || sigma2 < 0.0 {
        return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {sigma2}")));
    }
    if constellation.k() != rc.k() {
        return Err(Error::DimensionMismatch(format!(
            "constellation has dimension {}, code needs K={}",
            constellation.k(),
            rc.k()
        )));
    }
    let a = rc.build_a(h0)?;
    let n = rc.block_len();
    let r = &a * constellation.sigma() * a.transpose() + RealMatrix::identity(n, n) * (sigma2 / 2.0);
    let r = (&r + r.transpose()) * 0.5;
    Ok(CovarianceModel { r, source: CovarianceSource::Theoretical })
}

/// Sample second moment `(1/J) sum_i y_i y_i^T`.
pub fn sample_r(blocks: &[RealVector]) -> Result<CovarianceModel> {
    let first = blocks.first().ok_or(Error::ZeroInput("block list"))?;
    let n = first.len();
    let mut r = RealMatrix::zeros(n, n);
    for y in blocks {
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("block of length {} among blocks of length {n}", y.len())));
        }
        r.syger(1.0, y, y, 1.0);
    }
    r /= blocks.len() as f64;
    // syger fills the lower triangle only
    r.fill_upper_triangle_with_lower_triangle();
    Ok(CovarianceModel { r, source: CovarianceSource::Sample { blocks: blocks.len() } })
}

/// `Q_R = sum_k Phi_k^T R Phi_k`, so that `tr{A(h)^T R A(h)} = h^T Q_R h`.
pub fn q_matrix(rc: &RealifiedCode, r: &RealMatrix) -> Result<RealMatrix> {
    if r.shape() != (rc.block_len(), rc.block_len()) {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, expected 2ML={}",
            r.nrows(),
            r.ncols(),
            rc.block_len()
        )));
    }
    let n = rc.channel_len();
    let mut q = RealMatrix::zeros(n, n);
    for p in rc.phi_k() {
        q += p.transpose() * r * p;
    }
    Ok((&q + q.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Unit-norm channel vector estimate.
    pub h_hat: RealVector,
    pub top_eigenvalue: f64,
    /// Number of eigenvalues of `Q_R` within the degeneracy tolerance of the top one.
    pub top_multiplicity: usize,
}

impl ChannelEstimate {
    /// The top eigenspace is not one-dimensional; `h_hat` is then one element of it.
    pub fn degenerate(&self) -> bool {
        self.top_multiplicity > 1
    }
}

/// Dominant unit eigenvector of `Q_R`, sign-normalized so its largest-magnitude
/// entry is positive.
pub fn estimate_channel(rc: &RealifiedCode, cov: &CovarianceModel) -> Result<ChannelEstimate> {
    let q = q_matrix(rc, &cov.r)?;
    let (values, vectors) = sorted_eigen(&q);
    let top = values[0];
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let top_multiplicity = values.iter().filter(|&&v| top - v <= DEGENERACY_TOL * scale).count();
    let mut h_hat = vectors.column(0).into_owned();
    let pivot = h_hat.iamax();
    if h_hat[pivot] < 0.0 {
        h_hat.neg_mut();
    }
    h_hat /= h_hat.norm();
    Ok(ChannelEstimate { h_hat, top_eigenvalue: top, top_multiplicity })
}

/// `s_hat = A(h_hat)^T y / |h_hat|^2`.
pub fn decode(rc: &RealifiedCode, h_hat: &RealVector, y: &RealVector) -> Result<RealVector> {
    let n2 = h_hat.norm_squared();
    if n2 == 0.0 {
        return Err(Error::ZeroInput("channel estimate"));
    }
    if y.len() != rc.block_len() {
        return Err(Error::DimensionMismatch(format!(
            "received block has length {}, expected 2ML={}",
            y.len(),
            rc.block_len()
        )));
    }
    Ok(rc.build_a(h_hat)?.tr_mul(y) / n2)
}

/// Returns `B = A(u0)^T A(u)` with `u0 = h0/|h0|`, `u = h_hat/|h_hat|`, and the
/// residual `|A(u) - A(u0) B|`.
pub fn ambiguity_matrix(rc: &RealifiedCode, h0: &RealVector, h_hat: &RealVector) -> Result<(RealMatrix, f64)> {
    let (n0, n1) = (h0.norm(), h_hat.norm());
    if n0 == 0.0 {
        return Err(Error::ZeroInput("true channel vector"));
    }
    if n1 == 0.0 {
        return Err(Error::ZeroInput("channel estimate"));
    }
    let a0 = rc.build_a(&(h0 / n0))?;
    let a1 = rc.build_a(&(h_hat / n1))?;
    let b = a0.tr_mul(&a1);
    let residual = (&a1 - &a0 * &b).norm();
    Ok((b, residual))
}

/// Orthonormal basis of the lifted channel-side subspace `{lift(B) | B in sub}`.
pub fn lifted_basis(rc: &RealifiedCode, h0: &RealVector, sub: &AmbiguitySubspace) -> Result<RealMatrix> {
    let cols: Result<Vec<RealVector>> = sub.basis().iter().map(|b| lift_to_channel(rc, h0, b)).collect();
    Ok(orthonormal_span(&RealMatrix::from_columns(&cols?), 1e-8))
}

/// Angle (radians) between `h` and its orthogonal projection onto the span of
/// the orthonormal columns of `basis`.
pub fn angle_to_span(basis: &RealMatrix, h: &RealVector) -> f64 {
    let u = h / h.norm();
    let residual = &u - basis * basis.tr_mul(&u);
    residual.norm().clamp(0.0, 1.0).asin()
}

/// JSON report of one estimator run.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub code: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J")]
    pub blocks: usize,
    pub sigma2: f64,
    pub seed: u64,
    pub h_hat: Vec<f64>,
    pub s_hat: Vec<Vec<f64>>,
    /// Rows of the ambiguity matrix.
    #[serde(rename = "B_hat")]
    pub b_hat: Vec<Vec<f64>>,
    pub residual: f64,
    /// `|B_hat^T B_hat - I|`
    pub orthogonality_residual: f64,
    pub subspace_angle: f64,
    pub top_multiplicity: usize,
    pub degenerate: bool,
}

/// Simulation, sample covariance, estimate, decode and ambiguity extraction in one pass.
pub fn run_estimate(config: &SimulationConfig, tol: f64) -> Result<(EstimateReport, SimulationOutput)> {
    let sim = simulate(config)?;
    let rc = realify(&config.code, config.m)?;
    let cov = sample_r(&sim.blocks)?;
    let est = estimate_channel(&rc, &cov)?;
    let s_hat: Result<Vec<Vec<f64>>> = sim
        .blocks
        .iter()
        .map(|y| decode(&rc, &est.h_hat, y).map(|s| s.iter().cloned().collect()))
        .collect();
    let h0 = sim.channel.vector();
    let (b_hat, residual) = ambiguity_matrix(&rc, h0, &est.h_hat)?;
    let k = rc.k();
    let orthogonality_residual = (b_hat.transpose() * &b_hat - RealMatrix::identity(k, k)).norm();
    let sub = compute_bspace(&config.code, &sim.channel, tol)?;
    let lifted = lifted_basis(&rc, h0, &sub)?;
    let subspace_angle = angle_to_span(&lifted, &est.h_hat);
    let report = EstimateReport {
        code: config.code.name().to_string(),
        m: config.m,
        blocks: config.blocks,
        sigma2: config.sigma2,
        seed: config.seed,
        h_hat: est.h_hat.iter().cloned().collect(),
        s_hat: s_hat?,
        b_hat: b_hat.row_iter().map(|r| r.iter().cloned().collect()).collect(),
        residual,
        orthogonality_residual,
        subspace_angle,
        top_multiplicity: est.top_multiplicity,
        degenerate: est.degenerate(),
    };
    Ok((report, sim))
}
