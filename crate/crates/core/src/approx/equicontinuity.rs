//! Sampled moduli of continuity for the iterate family `{f^n}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::sampling;
use crate::structure::{sup_pseudometric, Disk, LayerState, PredicateSpec, SampleBox};

/// Pairs closer than this are redrawn.
pub const DEGENERATE_PAIR: f64 = 1e-12;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityOptions {
    /// Strictly increasing iterate counts.
    pub schedule: Vec<u64>,
    pub pair_samples: usize,
    pub seed: u64,
    /// Sup radius of the partner perturbation; defaults to `1e-6` times the
    /// widest side of the sampling box.
    pub pair_radius: Option<f64>,
    /// Growth factor of the max ratio, first entry to worst entry, above
    /// which expansion is reported.
    pub growth_threshold: f64,
}

impl Default for EquicontinuityOptions {
    fn default() -> Self {
        EquicontinuityOptions {
            schedule: vec![1, 2, 4, 8, 16],
            pair_samples: 200,
            seed: 0,
            pair_radius: None,
            growth_threshold: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRatios {
    pub n: u64,
    /// `d(f^n(v), f^n(w)) / d(v, w)` per pair, in pair order.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EquicontinuityVerdict {
    EquicontinuousEvidence,
    /// `growth_rate` is `ln(growth) / (n_worst - n_first)` per iterate.
    ExpansionEvidence { growth_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityEstimate {
    pub pairs: Vec<(LayerState, LayerState)>,
    pub schedule: Vec<ScheduleRatios>,
    /// `max_n max_ratio(n) / max_ratio(first)`, with `0/0 = 0`.
    pub growth: f64,
    pub threshold: f64,
    pub verdict: EquicontinuityVerdict,
}

impl EquicontinuityEstimate {
    /// Re-derives the growth and verdict from the stored ratios.
    pub fn rederive(schedule: &[ScheduleRatios], threshold: f64) -> (f64, EquicontinuityVerdict) {
        let base = schedule[0].max_ratio;
        let (worst_n, worst) = schedule
            .iter()
            .map(|s| (s.n, s.max_ratio))
            .fold((schedule[0].n, base), |acc, x| if x.1 > acc.1 { x } else { acc });
        let growth = if worst == 0.0 {
            0.0
        } else if base == 0.0 {
            f64::INFINITY
        } else {
            worst / base
        };
        let verdict = if growth > threshold {
            let span = (worst_n - schedule[0].n).max(1) as f64;
            EquicontinuityVerdict::ExpansionEvidence { growth_rate: growth.ln() / span }
        } else {
            EquicontinuityVerdict::EquicontinuousEvidence
        };
        (growth, verdict)
    }
}

fn draw_pair<R: Rng>(
    b: &SampleBox,
    disk: &Disk,
    preds: &[PredicateSpec],
    radius: f64,
    rng: &mut R,
) -> Result<Option<(LayerState, LayerState)>> {
    for _ in 0..MAX_REDRAWS {
        let v = sampling::uniform_in_disk(b, disk, preds, rng)?;
        let coords = v
            .coords()
            .iter()
            .zip(b.lo.iter().zip(&b.hi))
            .map(|(&x, (&lo, &hi))| (x + rng.random_range(-radius..=radius)).clamp(lo, hi))
            .collect();
        let w = LayerState::new(coords)?;
        if disk.violation(&w, preds).is_some() {
            continue;
        }
        if sup_pseudometric(preds, &v, &w) >= DEGENERATE_PAIR {
            return Ok(Some((v, w)));
        }
    }
    Ok(None)
}

/// Samples nearby pairs in the disk and measures how far each iterate in the
/// schedule stretches them.
pub fn equicontinuity_estimate<F: StateMap + ?Sized>(
    f: &F,
    disk: &Disk,
    preds: &[PredicateSpec],
    dim: usize,
    region: Option<&SampleBox>,
    opts: &EquicontinuityOptions,
) -> Result<EquicontinuityEstimate> {
    if opts.schedule.is_empty() || opts.schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("schedule must be nonempty and strictly increasing".into()));
    }
    if opts.pair_samples == 0 {
        return Err(Error::InvalidArgument("pair_samples must be >= 1".into()));
    }
    disk.validate(preds)?;
    crate::structure::validate_predicates(preds, dim)?;
    let b = SampleBox::enclosing(disk, preds, dim, region)?;
    let width = b.lo.iter().zip(&b.hi).map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let radius = opts.pair_radius.unwrap_or(1e-6 * width);
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("pair radius must be > 0".into()));
    }

    let mut rng = sampling::rng(opts.seed);
    let mut pairs = Vec::with_capacity(opts.pair_samples);
    for _ in 0..opts.pair_samples {
        match draw_pair(&b, disk, preds, radius, &mut rng)? {
            Some(p) => pairs.push(p),
            None => return Err(Error::InvalidArgument("every sampled pair was degenerate".into())),
        }
    }

    let base: Vec<f64> = pairs.iter().map(|(v, w)| sup_pseudometric(preds, v, w)).collect();
    let mut current = pairs.clone();
    let mut at = 0u64;
    let mut schedule = Vec::with_capacity(opts.schedule.len());
    for &n in &opts.schedule {
        for (v, w) in current.iter_mut() {
            for _ in at..n {
                *v = f.apply(v)?;
                *w = f.apply(w)?;
            }
        }
        at = n;
        let ratios: Vec<f64> = current
            .iter()
            .zip(&base)
            .map(|((v, w), d)| sup_pseudometric(preds, v, w) / d)
            .collect();
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        schedule.push(ScheduleRatios { n, ratios, max_ratio, mean_ratio });
    }
    let (growth, verdict) = EquicontinuityEstimate::rederive(&schedule, opts.growth_threshold);
    Ok(EquicontinuityEstimate { pairs, schedule, growth, threshold: opts.growth_threshold, verdict })
}
