//! Tolerance-aware cycle detection on a single orbit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::structure::{sup_pseudometric, LayerState, PredicateSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub preperiod: usize,
    pub period: usize,
    /// `f^preperiod(v0), ..., f^(preperiod + period - 1)(v0)`
    pub cycle_points: Vec<LayerState>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CycleOutcome {
    Found(CycleReport),
    NoCycleFound { max_iter: usize },
}

/// Smallest `mu` with `d(x[n + q], x[n]) < tol` for every `n >= mu` in the
/// stored orbit, provided at least one full period is verified.
fn tail_start(xs: &[LayerState], q: usize, close: &dyn Fn(usize, usize) -> bool) -> Option<usize> {
    let last = xs.len().checked_sub(1 + q)?;
    let mut mu = last + 1;
    while mu > 0 && close(mu - 1, mu - 1 + q) {
        mu -= 1;
    }
    (last + 1 - mu >= q).then_some(mu)
}

/// Finds the minimal period and preperiod of the orbit of `v0` up to `tol`
/// in the sup pseudometric. Brent's scheme proposes a cycle length `lambda`;
/// every period `q <= lambda` is then checked against the whole stored orbit.
pub fn cycle_detect<F: StateMap + ?Sized>(
    f: &F,
    v0: &LayerState,
    preds: &[PredicateSpec],
    tol: f64,
    max_iter: usize,
) -> Result<CycleOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    crate::structure::validate_predicates(preds, v0.dim())?;
    let mut xs = Vec::with_capacity(max_iter + 1);
    xs.push(v0.clone());
    for _ in 0..max_iter {
        let next = f.apply(xs.last().expect("nonempty"))?;
        xs.push(next);
    }
    let close = |a: usize, b: usize| sup_pseudometric(preds, &xs[a], &xs[b]) < tol;

    // Brent: the hare runs ahead in power-of-two windows
    let (mut power, mut lambda) = (1usize, 1usize);
    let (mut tortoise, mut hare) = (0usize, 1usize);
    loop {
        if hare >= xs.len() {
            return Ok(CycleOutcome::NoCycleFound { max_iter });
        }
        if close(tortoise, hare) {
            break;
        }
        if power == lambda {
            tortoise = hare;
            power *= 2;
            lambda = 0;
        }
        hare += 1;
        lambda += 1;
    }

    for q in 1..=lambda {
        if let Some(mu) = tail_start(&xs, q, &close) {
            return Ok(CycleOutcome::Found(CycleReport {
                preperiod: mu,
                period: q,
                cycle_points: xs[mu..mu + q].to_vec(),
                tol,
            }));
        }
    }
    Ok(CycleOutcome::NoCycleFound { max_iter })
}
