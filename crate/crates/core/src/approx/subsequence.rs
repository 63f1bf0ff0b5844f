//! Increasing iterate subsequences converging to a tabulated equilibrium on
//! finitely many states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::structure::{LayerState, PredicateSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateLevel {
    pub n: u64,
    /// `max_{i, j <= k} |P_i(f^n(v_j)) - P_i(f*(v_j))|`
    pub witnessed: f64,
    /// `1 / (k + 1)`
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsequenceCertificate {
    pub v_tilde: Vec<LayerState>,
    pub predicates: Vec<String>,
    pub levels: Vec<CertificateLevel>,
    pub requested_levels: usize,
    /// First level the search budget could not satisfy.
    pub failed_level: Option<usize>,
}

impl SubsequenceCertificate {
    pub fn complete(&self) -> bool {
        self.failed_level.is_none() && self.levels.len() == self.requested_levels
    }

    /// Recomputes every level from scratch. True iff the counts are strictly
    /// increasing and each recomputed value equals the stored one and is
    /// below its bound.
    pub fn verify<F, G>(&self, f: &F, f_star: &G, preds: &[PredicateSpec]) -> Result<bool>
    where
        F: StateMap + ?Sized,
        G: StateMap + ?Sized,
    {
        let targets = self.v_tilde.iter().map(|v| f_star.apply(v)).collect::<Result<Vec<_>>>()?;
        let mut prev = 0;
        for (k, level) in self.levels.iter().enumerate() {
            if level.n <= prev || level.bound != bound(k) {
                return Ok(false);
            }
            prev = level.n;
            let mut iterates = self.v_tilde.clone();
            for x in iterates.iter_mut() {
                for _ in 0..level.n {
                    *x = f.apply(x)?;
                }
            }
            let w = witness(k, preds, &iterates, &targets);
            if w != level.witnessed || w >= level.bound {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn bound(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

/// Indices past the end are clamped, so a short list is reused.
fn witness(k: usize, preds: &[PredicateSpec], iterates: &[LayerState], targets: &[LayerState]) -> f64 {
    let jmax = k.min(iterates.len() - 1);
    let imax = k.min(preds.len() - 1);
    let mut worst: f64 = 0.0;
    for j in 0..=jmax {
        for p in &preds[..=imax] {
            worst = worst.max((p.eval(&iterates[j]) - p.eval(&targets[j])).abs());
        }
    }
    worst
}

/// Builds `n_0 < n_1 < ... < n_{K-1}` level by level, taking at each level
/// the first `n` past the previous one whose witnessed value is below
/// `1/(k+1)`. Counts are never allowed past `search_budget`.
pub fn sequential_subsequence<F, G>(
    f: &F,
    f_star: &G,
    v_tilde: &[LayerState],
    preds: &[PredicateSpec],
    k_levels: usize,
    search_budget: u64,
) -> Result<SubsequenceCertificate>
where
    F: StateMap + ?Sized,
    G: StateMap + ?Sized,
{
    if k_levels == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let first = v_tilde
        .first()
        .ok_or_else(|| Error::InvalidArgument("V_tilde must be nonempty".into()))?;
    crate::structure::validate_predicates(preds, first.dim())?;
    if preds.is_empty() {
        return Err(Error::InvalidArgument("at least one predicate is required".into()));
    }
    let targets = v_tilde.iter().map(|v| f_star.apply(v)).collect::<Result<Vec<_>>>()?;

    let mut cert = SubsequenceCertificate {
        v_tilde: v_tilde.to_vec(),
        predicates: preds.iter().map(|p| p.label.clone()).collect(),
        levels: Vec::with_capacity(k_levels),
        requested_levels: k_levels,
        failed_level: None,
    };
    let mut iterates = v_tilde.to_vec();
    let mut n = 0u64;
    for k in 0..k_levels {
        let found = loop {
            if n >= search_budget {
                break false;
            }
            for x in iterates.iter_mut() {
                *x = f.apply(x)?;
            }
            n += 1;
            let w = witness(k, preds, &iterates, &targets);
            if w < bound(k) {
                cert.levels.push(CertificateLevel { n, witnessed: w, bound: bound(k) });
                break true;
            }
        };
        if !found {
            cert.failed_level = Some(k);
            break;
        }
    }
    Ok(cert)
}
