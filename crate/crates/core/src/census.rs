//! Monte Carlo census of `dim B_M(H0)` over random channels.
//!
//! For each receive-antenna count `M`, independent Gaussian channels are
//! drawn and the ambiguity space is computed. Almost-sure determinism means
//! all trials must agree; any spread is reported as a failure. Trial `t` at
//! `M` uses stream `(M << 32) | t` of the master seed, so results do not
//! depend on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ostbc::OstbCode;
use crate::random::{gaussian_channel, trial_rng};
use crate::subspace::{compute_bspace, compute_bstar, AmbiguitySubspace};

/// Largest principal angle (radians) at which two subspaces count as equal.
pub const SUBSPACE_ANGLE_TOL: f64 = 1e-8;

pub const DEFAULT_TRIALS: usize = 100;

/// Stream index of one census trial.
pub fn trial_stream(m: usize, trial: usize) -> u64 {
    ((m as u64) << 32) | trial as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub dim: usize,
    /// `pi/2` when the dimensions differ.
    pub max_principal_angle_to_bstar: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionCensus {
    #[serde(rename = "M")]
    pub m: usize,
    pub trials: usize,
    /// Observed dimension -> number of trials.
    pub histogram: BTreeMap<usize, usize>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl DimensionCensus {
    /// All trials produced the same dimension.
    pub fn unimodal(&self) -> bool {
        self.histogram.len() == 1
    }

    /// Most frequent dimension; ties go to the smaller value.
    pub fn mode(&self) -> usize {
        let mut best = (0, 0);
        for (&d, &n) in &self.histogram {
            if n > best.1 {
                best = (d, n);
            }
        }
        best.0
    }

    /// Every trial subspace equals `bstar` to [`SUBSPACE_ANGLE_TOL`].
    pub fn all_match_bstar(&self) -> bool {
        self.records.iter().all(|r| r.max_principal_angle_to_bstar <= SUBSPACE_ANGLE_TOL)
    }
}

fn census_against(code: &OstbCode, bstar: &AmbiguitySubspace, m: usize, trials: usize, seed: u64, tol: f64) -> Result<DimensionCensus> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trial count must be at least 1".into()));
    }
    if m < 1 {
        return Err(Error::InvalidArgument("receive antenna count must be at least 1".into()));
    }
    let records: Result<Vec<TrialRecord>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial_stream(m, trial));
            let channel = gaussian_channel(code.n(), m, &mut rng);
            let sub = compute_bspace(code, &channel, tol)?;
            Ok(TrialRecord { trial, dim: sub.dim(), max_principal_angle_to_bstar: sub.max_principal_angle(bstar) })
        })
        .collect();
    let records = records?;
    let mut histogram = BTreeMap::new();
    for r in &records {
        *histogram.entry(r.dim).or_insert(0) += 1;
    }
    Ok(DimensionCensus { m, trials, histogram, records })
}

pub fn dimension_census(code: &OstbCode, m: usize, trials: usize, seed: u64, tol: f64) -> Result<DimensionCensus> {
    let bstar = compute_bstar(code, tol)?;
    census_against(code, &bstar, m, trials, seed, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusResult {
    pub code: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M_range")]
    pub m_range: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub dims: Vec<DimensionCensus>,
    pub d_mode: Vec<usize>,
    pub d_star: usize,
    /// Smallest `M` at which every trial subspace equals the invariant space.
    #[serde(rename = "M_star")]
    pub m_star: Option<usize>,
}

impl CensusResult {
    /// Violated invariants, empty when the census is consistent.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.dims {
            if !c.unimodal() {
                out.push(format!("M={}: trials disagree on the dimension {:?}", c.m, c.histogram));
            }
        }
        for (c, &d) in self.dims.iter().zip(&self.d_mode) {
            if d < self.d_star {
                out.push(format!("M={}: modal dimension {d} below invariant dimension {}", c.m, self.d_star));
            }
        }
        for w in self.dims.iter().zip(&self.d_mode).collect::<Vec<_>>().windows(2) {
            let ((c0, &d0), (c1, &d1)) = (w[0], w[1]);
            if d1 > d0 {
                out.push(format!("modal dimension increases from {d0} at M={} to {d1} at M={}", c0.m, c1.m));
            } else if d0 > self.d_star && d1 == d0 {
                out.push(format!("modal dimension stalls at {d0} > {} between M={} and M={}", self.d_star, c0.m, c1.m));
            }
        }
        match self.m_star {
            None => out.push(format!(
                "no M up to {} collapses to the invariant space",
                self.m_range.last().copied().unwrap_or(0)
            )),
            Some(ms) => {
                if ms > self.n {
                    out.push(format!("M_star={ms} exceeds N={}", self.n));
                }
                for (c, &d) in self.dims.iter().zip(&self.d_mode) {
                    if c.m >= ms && (d != self.d_star || !c.all_match_bstar()) {
                        out.push(format!("M={} >= M_star={ms} but the subspace differs from the invariant space", c.m));
                    }
                }
            }
        }
        for c in &self.dims {
            if c.m >= self.n && !c.all_match_bstar() {
                out.push(format!("M={} >= N={} but some trial differs from the invariant space", c.m, self.n));
            }
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.check().is_empty()
    }

    /// One row per trial: `code, M, trial, dim, max_principal_angle_to_bstar`.
    pub fn rows(&self) -> impl Iterator<Item = (&str, usize, &TrialRecord)> + '_ {
        self.dims.iter().flat_map(move |c| c.records.iter().map(move |r| (self.code.as_str(), c.m, r)))
    }
}

pub fn find_mstar(code: &OstbCode, m_max: usize, trials: usize, seed: u64, tol: f64) -> Result<CensusResult> {
    if m_max < 1 {
        return Err(Error::InvalidArgument("M_max must be at least 1".into()));
    }
    let bstar = compute_bstar(code, tol)?;
    let dims: Result<Vec<DimensionCensus>> = (1..=m_max).map(|m| census_against(code, &bstar, m, trials, seed, tol)).collect();
    let dims = dims?;
    let d_mode: Vec<usize> = dims.iter().map(DimensionCensus::mode).collect();
    let m_star = dims.iter().find(|c| c.all_match_bstar()).map(|c| c.m);
    Ok(CensusResult {
        code: code.name().to_string(),
        n: code.n(),
        m_range: (1..=m_max).collect(),
        trials,
        seed,
        tol,
        dims,
        d_mode,
        d_star: bstar.dim(),
        m_star,
    })
}
