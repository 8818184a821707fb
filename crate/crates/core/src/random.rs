//! Seeded random draws.
//!
//! Every random quantity comes from a ChaCha stream selected by a master seed
//! and a stream index, so Monte Carlo trials are reproducible and independent
//! of the order in which they are scheduled.

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embed::{ComplexMatrix, RealMatrix, C64};
use crate::ostbc::ChannelRealization;

pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> RealMatrix {
    // from_fn visits column-major; keep it explicit so the draw order is fixed
    let mut m = RealMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = normal(rng);
        }
    }
    m
}

/// `N x M` matrix of independent circular complex Gaussians, unit variance per
/// complex entry.
pub fn gaussian_channel<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> ChannelRealization {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = ComplexMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            h[(i, j)] = C64::new(scale * normal(rng), scale * normal(rng));
        }
    }
    ChannelRealization::new(h).expect("a Gaussian draw is nonzero almost surely")
}

pub fn gaussian_column<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..n).map(|_| C64::new(scale * normal(rng), scale * normal(rng))).collect()
}

/// Random `m x q` matrix with orthonormal columns (QR of a Gaussian matrix,
/// sign-corrected so the draw is Haar distributed).
pub fn random_orthonormal<R: Rng + ?Sized>(m: usize, q: usize, rng: &mut R) -> RealMatrix {
    assert!(q <= m, "cannot draw {q} orthonormal columns in dimension {m}");
    let g = gaussian_matrix(m, q, rng);
    let qr = QR::new(g);
    let r = qr.r();
    let mut qm = qr.q();
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            qm.column_mut(j).neg_mut();
        }
    }
    qm
}

/// Random symmetric positive-definite `k x k` matrix with eigenvalues drawn
/// uniformly from `[lo, hi]`.
pub fn random_spd<R: Rng + ?Sized>(k: usize, lo: f64, hi: f64, rng: &mut R) -> RealMatrix {
    let u = random_orthonormal(k, k, rng);
    let diag = RealMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| rng.random_range(lo..=hi)));
    let s = &u * diag * u.transpose();
    (&s + s.transpose()) * 0.5
}

/// Random symmetric `m x m` matrix with standard Gaussian entries.
pub fn random_symmetric<R: Rng + ?Sized>(m: usize, rng: &mut R) -> RealMatrix {
    let g = gaussian_matrix(m, m, rng);
    (&g + g.transpose()) * 0.5
}
