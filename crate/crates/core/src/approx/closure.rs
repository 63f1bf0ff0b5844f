use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::structure::{LayerState, PredicateSpec};

/// States closer than this in the sup pseudometric are identified.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Closure {
    /// In discovery order, starting with the deduplicated seeds.
    pub states: Vec<LayerState>,
    pub truncated: bool,
    /// Evaluations that failed and were skipped.
    pub failed_evaluations: usize,
}

/// Breadth-first closure of `seeds` under every map in `fs`, capped at
/// `max_size` states.
pub fn close_under(
    fs: &[&dyn StateMap],
    seeds: &[LayerState],
    preds: &[PredicateSpec],
    max_size: usize,
    tol: f64,
) -> Result<Closure> {
    if max_size < seeds.len() {
        return Err(Error::InvalidArgument(format!("max_size {max_size} is below the {} seeds", seeds.len())));
    }
    let known = |states: &[LayerState], v: &LayerState| {
        states
            .iter()
            .any(|w| w.dim() == v.dim() && crate::structure::sup_pseudometric(preds, v, w) < tol)
    };
    let mut out = Closure { states: Vec::new(), truncated: false, failed_evaluations: 0 };
    for v in seeds {
        if !known(&out.states, v) {
            out.states.push(v.clone());
        }
    }
    let mut queue: VecDeque<usize> = (0..out.states.len()).collect();
    while let Some(i) = queue.pop_front() {
        for f in fs {
            let v = match f.apply(&out.states[i]) {
                Ok(v) => v,
                Err(_) => {
                    out.failed_evaluations += 1;
                    continue;
                }
            };
            if known(&out.states, &v) {
                continue;
            }
            if out.states.len() == max_size {
                out.truncated = true;
                return Ok(out);
            }
            out.states.push(v);
            queue.push_back(out.states.len() - 1);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{EquilibriumOptions, LimitMap};
    use crate::function::LayerFunctionSpec;

    fn s(x: f64) -> LayerState {
        LayerState::scalar(x).unwrap()
    }

    #[test]
    fn identity_closure_is_the_seed() {
        let p = PredicateSpec::coordinates(1);
        let c = close_under(&[&LayerFunctionSpec::Identity], &[s(0.7)], &p, 5, DEFAULT_DEDUP_TOL).unwrap();
        assert_eq!(c.states, vec![s(0.7)]);
        assert!(!c.truncated);
    }

    #[test]
    fn squaring_tower() {
        let p = PredicateSpec::coordinates(1);
        let c = close_under(&[&LayerFunctionSpec::Square], &[s(0.5)], &p, 10, DEFAULT_DEDUP_TOL).unwrap();
        // the tower stops once consecutive squares are within the dedup tolerance
        let mut expected = vec![0.5f64];
        loop {
            let last = *expected.last().unwrap();
            if (last * last - last).abs() < DEFAULT_DEDUP_TOL {
                break;
            }
            expected.push(last * last);
        }
        assert_eq!(c.states, expected.into_iter().map(s).collect::<Vec<_>>());
        assert!(!c.truncated);

        let c = close_under(&[&LayerFunctionSpec::Square], &[s(0.5)], &p, 3, DEFAULT_DEDUP_TOL).unwrap();
        assert_eq!(c.states, vec![s(0.5), s(0.25), s(0.0625)]);
        assert!(c.truncated);
    }

    #[test]
    fn tower_with_limit_map() {
        let p = PredicateSpec::coordinates(1);
        let lim = LimitMap { f: &LayerFunctionSpec::Square, preds: &p, options: EquilibriumOptions::doubling(1e-12, 30) };
        let c = close_under(&[&LayerFunctionSpec::Square, &lim], &[s(0.5)], &p, 50, DEFAULT_DEDUP_TOL).unwrap();
        assert_eq!(&c.states[..2], &[s(0.5), s(0.25)]);
        assert!(c.states[2].coords()[0] < 1e-12);
        assert!(c.states.iter().all(|v| v.coords()[0] < 0.6));
        assert!(!c.truncated);
    }

    #[test]
    fn failures_are_counted() {
        let p = PredicateSpec::coordinates(2);
        let f = LayerFunctionSpec::NewtonStep { coeffs: vec![1.0, 0.0, -1.0], critical_tol: 1e-12 };
        let origin = LayerState::new(vec![0.0, 0.0]).unwrap();
        let c = close_under(&[&f], &[origin], &p, 4, DEFAULT_DEDUP_TOL).unwrap();
        assert_eq!(c.failed_evaluations, 1);
        assert!(close_under(&[&f], &[s(0.1), s(0.2)], &PredicateSpec::coordinates(1), 1, 1e-10).is_err());
    }
}
