//! Parameter-tied recursive computations and sampled stability checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::sampling;
use crate::structure::{Disk, LayerState, PredicateSpec, SampleBox};

/// The orbit `x(0) = v, x(n + 1) = f(x(n))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub function: String,
    pub states: Vec<LayerState>,
}

impl Trajectory {
    pub fn last(&self) -> &LayerState {
        self.states.last().expect("trajectory holds x(0)")
    }

    /// Re-evaluates every step and checks it reproduces the stored state.
    pub fn replays<F: StateMap + ?Sized>(&self, f: &F) -> bool {
        self.states
            .windows(2)
            .all(|w| f.apply(&w[0]).map(|next| next == w[1]).unwrap_or(false))
    }
}

/// Evaluation failed part-way through a trajectory.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation failed at step {step}: {source}")]
pub struct TrajectoryError {
    pub step: usize,
    pub partial: Trajectory,
    #[source]
    pub source: Error,
}

/// `x(0), ..., x(n_steps)` with `x(n + 1) = f(x(n))`.
pub fn ptr_compute<F: StateMap + ?Sized>(
    f: &F,
    label: &str,
    v0: &LayerState,
    n_steps: usize,
) -> std::result::Result<Trajectory, TrajectoryError> {
    let mut traj = Trajectory { function: label.to_string(), states: vec![v0.clone()] };
    for step in 0..n_steps {
        match f.apply(traj.last()) {
            Ok(next) => traj.states.push(next),
            Err(source) => return Err(TrajectoryError { step, partial: traj, source }),
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum StabilityVerdict {
    /// No sampled orbit left the disk. This is absence of a counterexample,
    /// not a proof of stability.
    Stable,
    /// `|P(f^iterate(state))| = |value| > r_P`.
    UnstableWitness { state: LayerState, iterate: usize, predicate: String, value: f64 },
    /// Evaluation failed before a verdict could be reached.
    Inconclusive { state: LayerState, iterate: usize, cause: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub samples_tested: usize,
    pub iterations_per_sample: usize,
}

impl StabilityReport {
    /// Re-evaluates an unstable witness from scratch.
    pub fn witness_holds<F: StateMap + ?Sized>(&self, f: &F, disk: &Disk, preds: &[PredicateSpec]) -> bool {
        let StabilityVerdict::UnstableWitness { state, iterate, predicate, value } = &self.verdict else {
            return false;
        };
        let mut x = state.clone();
        for _ in 0..*iterate {
            match f.apply(&x) {
                Ok(next) => x = next,
                Err(_) => return false,
            }
        }
        let Some(p) = preds.iter().find(|p| &p.label == predicate) else { return false };
        let r = disk.bound(predicate).unwrap_or(f64::INFINITY);
        p.eval(&x) == *value && value.abs() > r
    }
}

/// Runs each given start state for `n_iters` steps and reports the first
/// disk violation.
pub fn check_stability_at<F: StateMap + ?Sized>(
    f: &F,
    disk: &Disk,
    preds: &[PredicateSpec],
    starts: &[LayerState],
    n_iters: usize,
) -> Result<StabilityReport> {
    disk.validate(preds)?;
    if n_iters == 0 {
        return Err(Error::InvalidArgument("n_iters must be >= 1".into()));
    }
    for (tested, v) in starts.iter().enumerate() {
        let mut x = v.clone();
        for t in 1..=n_iters {
            x = match f.apply(&x) {
                Ok(next) => next,
                Err(e) => {
                    return Ok(StabilityReport {
                        verdict: StabilityVerdict::Inconclusive {
                            state: v.clone(),
                            iterate: t,
                            cause: e.to_string(),
                        },
                        samples_tested: tested + 1,
                        iterations_per_sample: n_iters,
                    })
                }
            };
            if let Some((p, value)) = disk.violation(&x, preds) {
                return Ok(StabilityReport {
                    verdict: StabilityVerdict::UnstableWitness {
                        state: v.clone(),
                        iterate: t,
                        predicate: p.label.clone(),
                        value,
                    },
                    samples_tested: tested + 1,
                    iterations_per_sample: n_iters,
                });
            }
        }
    }
    Ok(StabilityReport {
        verdict: StabilityVerdict::Stable,
        samples_tested: starts.len(),
        iterations_per_sample: n_iters,
    })
}

/// Sampled falsifier for disk stability: draws `n_samples` seeded points of
/// the disk (restricted to `region` when given) and iterates each.
#[allow(clippy::too_many_arguments)]
pub fn check_stability<F: StateMap + ?Sized>(
    f: &F,
    disk: &Disk,
    preds: &[PredicateSpec],
    dim: usize,
    region: Option<&SampleBox>,
    n_samples: usize,
    n_iters: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    disk.validate(preds)?;
    let b = SampleBox::enclosing(disk, preds, dim, region)?;
    let mut rng = sampling::rng(seed);
    let starts = (0..n_samples)
        .map(|_| sampling::uniform_in_disk(&b, disk, preds, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    check_stability_at(f, disk, preds, &starts, n_iters)
}
