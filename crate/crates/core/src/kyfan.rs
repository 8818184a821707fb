//! Maximization of `tr{Q^T P Q}` over `m x q` matrices with orthonormal columns.
//!
//! With eigenvalues `lambda_1 >= ... >= lambda_m`, let `q-` count the
//! eigenvalues strictly above `lambda_q` and `q+` be the last index whose
//! eigenvalue equals `lambda_q`. The maximum is
//! `sum_{i <= q-} lambda_i + lambda_q (q - q-)`, attained exactly by the `Q`
//! whose column space contains the eigenvectors `1..q-` and lies inside the
//! span of eigenvectors `1..q+`.

use rayon::prelude::*;
use serde::Serialize;

use crate::embed::{RealMatrix, RealVector};
use crate::error::{Error, Result};
use crate::estimator::sorted_eigen;
use crate::random::{gaussian_matrix, random_orthonormal, trial_rng};

/// Eigenvalues within `DEGENERACY_REL_TOL * |P|` of each other are treated as equal.
pub const DEGENERACY_REL_TOL: f64 = 1e-8;
/// Slack on the upper bound, relative to `|P|`.
pub const BOUND_REL_TOL: f64 = 1e-12;
/// Samples within this distance (relative to `|P|`) of the maximum count as maximizers.
pub const NEAR_MAX_REL_TOL: f64 = 1e-9;
/// Projection-residual tolerance used by [`kyfan_sample_check`].
pub const MEMBERSHIP_TOL: f64 = 1e-6;
/// Size of the perturbation used to build non-maximizers.
pub const PERTURBATION: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SpectrumSpec {
    p: RealMatrix,
    q: usize,
    eigenvalues: RealVector,
    eigenvectors: RealMatrix,
    q_minus: usize,
    q_plus: usize,
    degeneracy_tol: f64,
}

impl SpectrumSpec {
    pub fn new(p: RealMatrix, q: usize) -> Result<Self> {
        Self::with_tolerance(p, q, DEGENERACY_REL_TOL)
    }

    /// `rel_tol` scales with the spectral norm of `P` to give the grouping tolerance.
    pub fn with_tolerance(p: RealMatrix, q: usize, rel_tol: f64) -> Result<Self> {
        if rel_tol.is_nan() || rel_tol <= 0.0 {
            return Err(Error::NonPositiveTolerance(rel_tol));
        }
        if !p.is_square() {
            return Err(Error::DimensionMismatch(format!("P is {}x{}, expected square", p.nrows(), p.ncols())));
        }
        let m = p.nrows();
        if q < 1 || q > m {
            return Err(Error::IndexOutOfRange { index: q, len: m });
        }
        let asym = (&p - p.transpose()).norm();
        if asym > 1e-12 * p.norm() {
            return Err(Error::InvalidArgument(format!("P is not symmetric (|P - P^T| = {asym:.3e})")));
        }
        let (eigenvalues, eigenvectors) = sorted_eigen(&p);
        let degeneracy_tol = rel_tol * eigenvalues.amax();
        let lq = eigenvalues[q - 1];
        let q_minus = eigenvalues.iter().take_while(|&&l| l - lq > degeneracy_tol).count();
        let q_plus = eigenvalues.iter().take_while(|&&l| l - lq >= -degeneracy_tol).count();
        let spec = Self { p, q, eigenvalues, eigenvectors, q_minus, q_plus, degeneracy_tol };
        debug_assert!(spec.reconstruction_error() <= 1e-10 * spec.norm().max(f64::MIN_POSITIVE));
        Ok(spec)
    }

    pub fn p(&self) -> &RealMatrix {
        &self.p
    }

    pub fn m(&self) -> usize {
        self.p.nrows()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Descending eigenvalues.
    pub fn eigenvalues(&self) -> &RealVector {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &RealMatrix {
        &self.eigenvectors
    }

    pub fn q_minus(&self) -> usize {
        self.q_minus
    }

    pub fn q_plus(&self) -> usize {
        self.q_plus
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    /// Spectral norm of `P`.
    pub fn norm(&self) -> f64 {
        self.eigenvalues.amax()
    }

    /// `|P - V diag(lambda) V^T|`
    pub fn reconstruction_error(&self) -> f64 {
        let v = &self.eigenvectors;
        (&self.p - v * RealMatrix::from_diagonal(&self.eigenvalues) * v.transpose()).norm()
    }
}

pub fn kyfan_value(spec: &SpectrumSpec) -> f64 {
    let head: f64 = spec.eigenvalues.rows(0, spec.q_minus).sum();
    head + spec.eigenvalues[spec.q - 1] * (spec.q - spec.q_minus) as f64
}

/// `tr{Q^T P Q}`
pub fn trace_objective(p: &RealMatrix, q: &RealMatrix) -> f64 {
    (q.transpose() * p * q).trace()
}

fn check_orthonormal(spec: &SpectrumSpec, q: &RealMatrix, tol: f64) -> Result<()> {
    if q.shape() != (spec.m(), spec.q) {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}x{}, expected {}x{}",
            q.nrows(),
            q.ncols(),
            spec.m(),
            spec.q
        )));
    }
    let dev = (q.transpose() * q - RealMatrix::identity(spec.q, spec.q)).norm();
    if dev > tol {
        return Err(Error::InvalidArgument(format!("Q^T Q deviates from I by {dev:.3e}")));
    }
    Ok(())
}

/// Residuals `(r_above, r_within)`: how far the eigenvectors above `lambda_q`
/// are from `span(Q)`, and how far `span(Q)` is from the eigenvectors `1..q+`.
pub fn membership_residuals(spec: &SpectrumSpec, q: &RealMatrix) -> (f64, f64) {
    let above = spec.eigenvectors.columns(0, spec.q_minus);
    let r_above = (above - q * q.tr_mul(&above)).norm();
    let within = spec.eigenvectors.columns(0, spec.q_plus);
    let r_within = (q - within * within.tr_mul(q)).norm();
    (r_above, r_within)
}

/// Whether `Q` is a maximizer, decided by projection residuals at `tol`.
pub fn kyfan_membership(spec: &SpectrumSpec, q: &RealMatrix, tol: f64) -> Result<bool> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::NonPositiveTolerance(tol));
    }
    check_orthonormal(spec, q, tol.max(1e-10))?;
    let (a, w) = membership_residuals(spec, q);
    Ok(a <= tol && w <= tol)
}

/// `[V_{1..q-}, V_{q-+1..q+} W] B` with `W` a random `(q+ - q-) x (q - q-)`
/// Stiefel matrix and `B` a random `q x q` orthogonal matrix.
pub fn constructed_maximizer(spec: &SpectrumSpec, seed: u64, stream: u64) -> RealMatrix {
    let mut rng = trial_rng(seed, stream);
    let (qm, qp, q) = (spec.q_minus, spec.q_plus, spec.q);
    let w = random_orthonormal(qp - qm, q - qm, &mut rng);
    let mut base = RealMatrix::zeros(spec.m(), q);
    base.columns_mut(0, qm).copy_from(&spec.eigenvectors.columns(0, qm));
    base.columns_mut(qm, q - qm).copy_from(&(spec.eigenvectors.columns(qm, qp - qm) * w));
    base * random_orthonormal(q, q, &mut rng)
}

/// A maximizer tilted by `eps` towards the eigenvectors below `lambda_q`, then
/// re-orthonormalized. `None` when no such eigenvectors exist.
pub fn perturbed_maximizer(spec: &SpectrumSpec, eps: f64, seed: u64, stream: u64) -> Option<RealMatrix> {
    let (qp, m, q) = (spec.q_plus, spec.m(), spec.q);
    if qp == m {
        return None;
    }
    let base = constructed_maximizer(spec, seed, stream);
    let mut rng = trial_rng(seed, stream ^ (1 << 63));
    let g = gaussian_matrix(m - qp, q, &mut rng);
    let tilt = spec.eigenvectors.columns(qp, m - qp) * (&g / g.norm());
    let qr = (base + tilt * eps).qr();
    Some(qr.q())
}

#[derive(Debug, Clone, Serialize)]
pub struct KyFanReport {
    pub m: usize,
    pub q: usize,
    pub q_minus: usize,
    pub q_plus: usize,
    pub eigenvalues: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub kyfan_value: f64,
    pub max_observed: f64,
    /// `max_observed <= kyfan_value + 1e-12 |P|`
    pub bound_holds: bool,
    /// Random samples within `1e-9 |P|` of the maximum.
    pub near_max_samples: usize,
    /// Every near-maximal random sample passes the membership test.
    pub near_max_members: bool,
    pub constructed: usize,
    /// Largest `|tr{Q^T P Q} - kyfan_value|` over constructed maximizers, relative to `max(|P|, |value|)`.
    pub constructed_max_rel_error: f64,
    pub constructed_accepted: bool,
    pub perturbed: usize,
    /// Every perturbed maximizer is rejected and falls strictly below the maximum.
    pub perturbed_rejected: bool,
    pub passed: bool,
}

/// Randomized check of the bound and of the maximizer characterization.
pub fn kyfan_sample_check(spec: &SpectrumSpec, samples: usize, seed: u64) -> Result<KyFanReport> {
    if samples < 1 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let value = kyfan_value(spec);
    let norm = spec.norm();
    let (m, q) = (spec.m(), spec.q);

    // a draw whose objective is within delta of the maximum lies within about
    // sqrt(delta / gap) of the maximizer set, hence the looser membership tolerance
    let near_tol = MEMBERSHIP_TOL.max(NEAR_MAX_REL_TOL.sqrt());
    let draws: Vec<(f64, bool)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let qm = random_orthonormal(m, q, &mut trial_rng(seed, i));
            let t = trace_objective(&spec.p, &qm);
            let near = value - t <= NEAR_MAX_REL_TOL * norm;
            let consistent = !near || kyfan_membership(spec, &qm, near_tol).unwrap_or(false);
            (t, consistent)
        })
        .collect();
    let max_observed = draws.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let near_max_samples = draws.iter().filter(|d| value - d.0 <= NEAR_MAX_REL_TOL * norm).count();
    let near_max_members = draws.iter().all(|d| d.1);
    let bound_holds = max_observed <= value + BOUND_REL_TOL * norm;

    let constructed = 16usize;
    let scale = norm.max(value.abs()).max(f64::MIN_POSITIVE);
    let base_stream = samples as u64;
    let mut constructed_max_rel_error = 0.0f64;
    let mut constructed_accepted = true;
    let mut perturbed = 0usize;
    let mut perturbed_rejected = true;
    for c in 0..constructed as u64 {
        let qs = constructed_maximizer(spec, seed, base_stream + c);
        constructed_max_rel_error = constructed_max_rel_error.max((trace_objective(&spec.p, &qs) - value).abs() / scale);
        constructed_accepted &= kyfan_membership(spec, &qs, MEMBERSHIP_TOL)?;
        if let Some(qp) = perturbed_maximizer(spec, PERTURBATION, seed, base_stream + c) {
            perturbed += 1;
            let below = trace_objective(&spec.p, &qp) < value - BOUND_REL_TOL * norm;
            let rejected = !kyfan_membership(spec, &qp, MEMBERSHIP_TOL)?;
            // a spectral gap below lambda_q smaller than the degeneracy tolerance cannot be resolved
            perturbed_rejected &= rejected && (below || spec.eigenvalues[q - 1] - spec.eigenvalues[spec.q_plus] <= spec.degeneracy_tol);
        }
    }

    let passed = bound_holds && near_max_members && constructed_max_rel_error <= 1e-12 && constructed_accepted && perturbed_rejected;
    Ok(KyFanReport {
        m,
        q,
        q_minus: spec.q_minus,
        q_plus: spec.q_plus,
        eigenvalues: spec.eigenvalues.iter().cloned().collect(),
        samples,
        seed,
        kyfan_value: value,
        max_observed,
        bound_holds,
        near_max_samples,
        near_max_members,
        constructed,
        constructed_max_rel_error,
        constructed_accepted,
        perturbed,
        perturbed_rejected,
        passed,
    })
}

/// Symmetric matrix `V diag(values) V^T` with a random orthogonal `V`.
pub fn matrix_with_spectrum(values: &[f64], seed: u64) -> RealMatrix {
    let m = values.len();
    let v = random_orthonormal(m, m, &mut trial_rng(seed, 0));
    let p = &v * RealMatrix::from_diagonal(&RealVector::from_column_slice(values)) * v.transpose();
    (&p + p.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{theoretical_r, ConstellationModel};
    use crate::ostbc::{builtin_code, realify, BUILTIN_CODES};
    use crate::random::{gaussian_channel, random_spd, random_symmetric};
    use proptest::prelude::*;
    use rand::Rng;

    fn diag(values: &[f64]) -> RealMatrix {
        RealMatrix::from_diagonal(&RealVector::from_column_slice(values))
    }

    #[test]
    fn value_examples() {
        let s = SpectrumSpec::new(diag(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert_eq!((s.q_minus(), s.q_plus()), (1, 2));
        assert_eq!(kyfan_value(&s), 5.0);

        for q in 1..=5 {
            let s = SpectrumSpec::new(RealMatrix::identity(5, 5), q).unwrap();
            assert_eq!((s.q_minus(), s.q_plus()), (0, 5));
            assert_eq!(kyfan_value(&s), q as f64);
        }

        let s = SpectrumSpec::new(diag(&[2.0, 1.0, 1.0, 0.0]), 2).unwrap();
        assert_eq!((s.q_minus(), s.q_plus()), (1, 3));
        assert_eq!(kyfan_value(&s), 3.0);
    }

    #[test]
    fn spec_rejects_bad_input() {
        assert!(SpectrumSpec::new(diag(&[1.0, 2.0]), 0).is_err());
        assert!(SpectrumSpec::new(diag(&[1.0, 2.0]), 3).is_err());
        assert!(SpectrumSpec::new(RealMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), 1).is_err());
        assert!(SpectrumSpec::new(RealMatrix::zeros(2, 3), 1).is_err());
        assert!(SpectrumSpec::with_tolerance(diag(&[1.0]), 1, 0.0).is_err());
    }

    #[test]
    fn reconstruction_within_tolerance() {
        let mut rng = trial_rng(1, 0);
        let p = random_symmetric(7, &mut rng);
        let s = SpectrumSpec::new(p, 3).unwrap();
        assert!(s.reconstruction_error() <= 1e-10 * s.norm());
        assert!(s.q_minus() < s.q() && s.q() <= s.q_plus());
    }

    #[test]
    fn membership_examples() {
        let s = SpectrumSpec::new(diag(&[4.0, 3.0, 2.0, 1.0]), 2).unwrap();
        let top = s.eigenvectors().columns(0, 2).into_owned();
        assert!(kyfan_membership(&s, &top, 1e-9).unwrap());
        let mut low = top.clone();
        low.set_column(1, &s.eigenvectors().column(3));
        assert!(!kyfan_membership(&s, &low, 1e-9).unwrap());
        assert!(kyfan_membership(&s, &RealMatrix::zeros(4, 2), 1e-9).is_err());

        // tight multiplicity boundary: any rotation of the top block stays a maximizer
        let s = SpectrumSpec::new(matrix_with_spectrum(&[5.0, 2.0, 2.0, 1.0, 0.5], 3), 3).unwrap();
        let top = s.eigenvectors().columns(0, 3).into_owned();
        let b = random_orthonormal(3, 3, &mut trial_rng(2, 0));
        assert!(kyfan_membership(&s, &(top * b), 1e-9).unwrap());
    }

    #[test]
    fn full_rank_q_attains_trace() {
        let mut rng = trial_rng(3, 0);
        let p = random_symmetric(3, &mut rng);
        let s = SpectrumSpec::new(p.clone(), 3).unwrap();
        for _ in 0..50 {
            let q = random_orthonormal(3, 3, &mut rng);
            assert!((trace_objective(&p, &q) - p.trace()).abs() <= 1e-12 * p.norm());
            assert!(kyfan_membership(&s, &q, 1e-9).unwrap());
        }
        assert!((kyfan_value(&s) - p.trace()).abs() <= 1e-12 * p.norm());
    }

    #[test]
    fn sample_check_distinct_spectrum() {
        let s = SpectrumSpec::new(diag(&[4.0, 3.0, 2.0, 1.0]), 2).unwrap();
        let r = kyfan_sample_check(&s, 10_000, 5).unwrap();
        assert!(r.max_observed <= 7.0 + 1e-12 * 4.0);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sample_check_degenerate_spectrum() {
        let p = matrix_with_spectrum(&[3.0, 2.5, 1.0, 1.0, 1.0, -0.5], 11);
        let s = SpectrumSpec::new(p, 3).unwrap();
        assert_eq!((s.q_minus(), s.q_plus()), (2, 5));
        let r = kyfan_sample_check(&s, 10_000, 12).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.constructed_max_rel_error <= 1e-12);
    }

    #[test]
    fn sample_check_is_reproducible() {
        let s = SpectrumSpec::new(random_symmetric(5, &mut trial_rng(4, 0)), 2).unwrap();
        let a = serde_json::to_string(&kyfan_sample_check(&s, 500, 9).unwrap()).unwrap();
        let b = serde_json::to_string(&kyfan_sample_check(&s, 500, 9).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(kyfan_sample_check(&s, 0, 9).is_err());
    }

    #[test]
    fn covariance_attains_bound_on_signal_space() {
        let mut rng = trial_rng(6, 0);
        for name in BUILTIN_CODES {
            let code = builtin_code(name).unwrap();
            for m in 1..=2 {
                let rc = realify(&code, m).unwrap();
                let ch = gaussian_channel(code.n(), m, &mut rng);
                let cm = ConstellationModel::correlated(random_spd(code.k(), 0.5, 2.0, &mut rng)).unwrap();
                let r = theoretical_r(&rc, ch.vector(), &cm, 0.1).unwrap().r;
                let u0 = ch.vector() / ch.vector().norm();
                let q = rc.build_a(&u0).unwrap() * cm.eigenvectors();
                let s = SpectrumSpec::new(r.clone(), code.k()).unwrap();
                let v = kyfan_value(&s);
                assert!((trace_objective(&r, &q) - v).abs() <= 1e-10 * v.abs(), "{name} M={m}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn constructed_maximizer_is_optimal(seed in 0u64..1_000, m in 2usize..8, q_frac in 0.0f64..1.0) {
            let q = 1 + ((m as f64 - 1.0) * q_frac) as usize;
            let mut rng = trial_rng(seed, 1);
            // repeated eigenvalues drawn from a small set
            let values: Vec<f64> = (0..m).map(|_| (rng.random_range(0..3) as f64) - 1.0).collect();
            let s = SpectrumSpec::new(matrix_with_spectrum(&values, seed), q).unwrap();
            let value = kyfan_value(&s);
            let qs = constructed_maximizer(&s, seed, 2);
            prop_assert!((trace_objective(s.p(), &qs) - value).abs() <= 1e-12 * s.norm().max(value.abs()).max(1.0));
            prop_assert!(kyfan_membership(&s, &qs, 1e-8).unwrap());
            let rand_q = random_orthonormal(m, q, &mut rng);
            prop_assert!(trace_objective(s.p(), &rand_q) <= value + 1e-12 * s.norm().max(1.0));
        }

        #[test]
        fn rotation_invariance(seed in 0u64..1_000, m in 2usize..8) {
            let mut rng = trial_rng(seed, 0);
            let p = random_symmetric(m, &mut rng);
            let q = 1 + seed as usize % m;
            let qm = random_orthonormal(m, q, &mut rng);
            let b = random_orthonormal(q, q, &mut rng);
            let a = trace_objective(&p, &qm);
            let c = trace_objective(&p, &(&qm * b));
            prop_assert!((a - c).abs() <= 1e-12 * p.norm().max(1.0));
        }
    }

}
