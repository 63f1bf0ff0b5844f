//! Randomised continuity probe for a deep equilibrium at one state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{iterate_until_equilibrium_with, EquilibriumOptions};
use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::sampling;
use crate::structure::{LayerState, PredicateSpec, SampleBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub radius: f64,
    pub k: usize,
    pub seed: u64,
    /// Convergence test applied to every probe and to the center.
    pub equilibrium: EquilibriumOptions,
    /// Defaults to `10 * equilibrium.tol`.
    pub dispersion_threshold: Option<f64>,
    /// Defaults to `10 * equilibrium.tol`.
    pub gap_threshold: Option<f64>,
}

impl ProbeOptions {
    pub fn new(radius: f64, k: usize, seed: u64) -> Self {
        ProbeOptions {
            radius,
            k,
            seed,
            equilibrium: EquilibriumOptions::doubling(1e-9, 20),
            dispersion_threshold: None,
            gap_threshold: None,
        }
    }

    pub fn thresholds(&self) -> (f64, f64) {
        let default = 10.0 * self.equilibrium.tol;
        (self.dispersion_threshold.unwrap_or(default), self.gap_threshold.unwrap_or(default))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub state: LayerState,
    /// Predicate values of the local limit; `None` if the test did not converge.
    pub limit: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateStats {
    pub label: String,
    pub mean: f64,
    /// `max - min` over converged probes.
    pub dispersion: f64,
    /// `|mean - center|`; `None` when the center did not converge.
    pub center_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Dispersion,
    CenterGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ContinuityVerdict {
    ContinuousEvidence,
    DiscontinuousEvidence { statistic: Statistic, predicate: String, value: f64 },
    NonConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub center: LayerState,
    pub center_limit: Option<Vec<f64>>,
    pub probes: Vec<Probe>,
    pub stats: Vec<PredicateStats>,
    pub dispersion_threshold: f64,
    pub gap_threshold: f64,
    pub verdict: ContinuityVerdict,
}

impl ContinuityReport {
    pub fn converged_probes(&self) -> usize {
        self.probes.iter().filter(|p| p.limit.is_some()).count()
    }

    /// Recomputes statistics and verdict from the stored probe data.
    pub fn rederive(&self) -> (Vec<PredicateStats>, ContinuityVerdict) {
        let labels: Vec<String> = self.stats.iter().map(|s| s.label.clone()).collect();
        summarize(&labels, &self.probes, self.center_limit.as_deref(), self.dispersion_threshold, self.gap_threshold)
    }
}

fn summarize(
    labels: &[String],
    probes: &[Probe],
    center: Option<&[f64]>,
    dispersion_threshold: f64,
    gap_threshold: f64,
) -> (Vec<PredicateStats>, ContinuityVerdict) {
    let limits: Vec<&Vec<f64>> = probes.iter().filter_map(|p| p.limit.as_ref()).collect();
    if limits.is_empty() {
        return (Vec::new(), ContinuityVerdict::NonConvergence);
    }
    let stats: Vec<PredicateStats> = labels
        .iter()
        .enumerate()
        .map(|(q, label)| {
            let vals = limits.iter().map(|l| l[q]);
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            let mean = vals.sum::<f64>() / limits.len() as f64;
            PredicateStats {
                label: label.clone(),
                mean,
                dispersion: hi - lo,
                center_gap: center.map(|c| (mean - c[q]).abs()),
            }
        })
        .collect();
    let fired = stats
        .iter()
        .find(|s| s.dispersion > dispersion_threshold)
        .map(|s| (Statistic::Dispersion, s, s.dispersion))
        .or_else(|| {
            stats
                .iter()
                .find_map(|s| s.center_gap.filter(|g| *g > gap_threshold).map(|g| (Statistic::CenterGap, s, g)))
        });
    let verdict = match fired {
        Some((statistic, s, value)) => {
            ContinuityVerdict::DiscontinuousEvidence { statistic, predicate: s.label.clone(), value }
        }
        None => ContinuityVerdict::ContinuousEvidence,
    };
    (stats, verdict)
}

fn local_limit<F: StateMap + Sync + ?Sized>(
    f: &F,
    v: &LayerState,
    preds: &[PredicateSpec],
    opts: &EquilibriumOptions,
) -> Result<Option<Vec<f64>>> {
    match iterate_until_equilibrium_with(f, std::slice::from_ref(v), preds, opts) {
        Ok(eq) if eq.converged() => {
            let w = &eq.table.entries[0].output;
            Ok(Some(preds.iter().map(|p| p.eval(w)).collect()))
        }
        Ok(_) => Ok(None),
        Err(e) if e.is_evaluation() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Draws `k` probes uniformly in the sup ball of `radius` around `v`
/// (clipped to `region`), runs each to its local limit and compares the
/// spread of limits, and their mean, with the limit at `v`.
pub fn continuity_probe<F: StateMap + Sync + ?Sized>(
    f: &F,
    v: &LayerState,
    preds: &[PredicateSpec],
    region: Option<&SampleBox>,
    opts: &ProbeOptions,
) -> Result<ContinuityReport> {
    if opts.k < 3 {
        return Err(Error::InvalidArgument("k must be >= 3".into()));
    }
    if !(opts.radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be > 0".into()));
    }
    crate::structure::validate_predicates(preds, v.dim())?;
    let mut b = SampleBox::around(v, opts.radius)?;
    if let Some(r) = region {
        if !r.contains(v) {
            return Err(Error::InvalidArgument("the probe center lies outside the region".into()));
        }
        b = b.intersect(r)?;
    }
    let mut rng = sampling::rng(opts.seed);
    let states: Vec<LayerState> = (0..opts.k).map(|_| sampling::uniform_in(&b, &mut rng)).collect();
    let probes = states
        .into_par_iter()
        .map(|state| {
            let limit = local_limit(f, &state, preds, &opts.equilibrium)?;
            Ok(Probe { state, limit })
        })
        .collect::<Result<Vec<_>>>()?;
    let center_limit = local_limit(f, v, preds, &opts.equilibrium)?;
    let (dispersion_threshold, gap_threshold) = opts.thresholds();
    let labels: Vec<String> = preds.iter().map(|p| p.label.clone()).collect();
    let (stats, verdict) =
        summarize(&labels, &probes, center_limit.as_deref(), dispersion_threshold, gap_threshold);
    Ok(ContinuityReport {
        center: v.clone(),
        center_limit,
        probes,
        stats,
        dispersion_threshold,
        gap_threshold,
        verdict,
    })
}
