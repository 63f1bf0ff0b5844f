//! The double-limit exchange test on `P(f^i(v_j))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::structure::{LayerState, PredicateSpec};

/// Consecutive small differences required before a limit is accepted.
pub const STABLE_CHECKS: usize = 5;
pub const MIN_CAP: usize = 16;

/// `v_j = target + (start - target) * ratio^j` for `j = 0, 1, 2, ...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricRule {
    pub start: LayerState,
    pub target: LayerState,
    pub ratio: f64,
}

impl GeometricRule {
    pub fn new(start: LayerState, target: LayerState, ratio: f64) -> Result<Self> {
        start.expect_dim(target.dim())?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1), got {ratio}")));
        }
        Ok(GeometricRule { start, target, ratio })
    }

    pub fn state(&self, j: usize) -> Result<LayerState> {
        let r = self.ratio.powi(j as i32);
        let coords = self
            .start
            .coords()
            .iter()
            .zip(self.target.coords())
            .map(|(s, t)| t + (s - t) * r)
            .collect();
        LayerState::new(coords)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Largest iterate count `i` examined.
    pub iterates: usize,
    /// Largest state index `j` examined.
    pub states: usize,
}

/// A limit found by successive differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedLimit {
    pub value: f64,
    pub detected: bool,
    /// Terms examined.
    pub terms: usize,
}

/// Accepts the limit once `STABLE_CHECKS` consecutive differences are below
/// `tol`; otherwise returns the last term with `detected = false`.
pub fn detect_limit(mut term: impl FnMut(usize) -> Result<f64>, tol: f64, cap: usize) -> Result<DetectedLimit> {
    let mut prev = term(0)?;
    let mut stable = 0;
    for n in 1..=cap {
        let x = term(n)?;
        stable = if (x - prev).abs() < tol { stable + 1 } else { 0 };
        prev = x;
        if stable == STABLE_CHECKS {
            return Ok(DetectedLimit { value: x, detected: true, terms: n + 1 });
        }
    }
    Ok(DetectedLimit { value: prev, detected: false, terms: cap + 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitExchangeReport {
    /// `lim_j lim_i P(f^i(v_j))`
    pub a: f64,
    /// `lim_i lim_j P(f^i(v_j))`
    pub b: f64,
    pub discrepancy: f64,
    /// Inner limits over `i`, one per state index `j` visited.
    pub inner_over_iterates: Vec<DetectedLimit>,
    /// Inner limits over `j`, one per iterate count `i` visited.
    pub inner_over_states: Vec<DetectedLimit>,
    pub outer_a: DetectedLimit,
    pub outer_b: DetectedLimit,
    pub caps: Caps,
    pub inner_tol: f64,
}

impl LimitExchangeReport {
    /// Whether every inner and outer limit was detected.
    pub fn all_detected(&self) -> bool {
        self.outer_a.detected
            && self.outer_b.detected
            && self.inner_over_iterates.iter().chain(&self.inner_over_states).all(|l| l.detected)
    }
}

/// Orbit of `v` under `f`, grown on demand.
struct Orbit {
    states: Vec<LayerState>,
}

impl Orbit {
    fn at<F: StateMap + ?Sized>(&mut self, f: &F, i: usize) -> Result<&LayerState> {
        while self.states.len() <= i {
            let next = f.apply(self.states.last().expect("orbit holds v"))?;
            self.states.push(next);
        }
        Ok(&self.states[i])
    }
}

/// Compares the two iterated limits of `P(f^i(v_j))`. Non-convergence is
/// flagged in the report, never raised.
pub fn limit_exchange_test<F: StateMap + ?Sized>(
    f: &F,
    p: &PredicateSpec,
    rule: &GeometricRule,
    inner_tol: f64,
    caps: Caps,
) -> Result<LimitExchangeReport> {
    if caps.iterates < MIN_CAP || caps.states < MIN_CAP {
        return Err(Error::InvalidArgument(format!("caps must be >= {MIN_CAP}")));
    }
    if !(inner_tol > 0.0) {
        return Err(Error::InvalidArgument("inner_tol must be > 0".into()));
    }
    p.validate(rule.start.dim())?;

    let mut orbits: Vec<Orbit> = Vec::new();
    let mut value = |i: usize, j: usize| -> Result<f64> {
        while orbits.len() <= j {
            orbits.push(Orbit { states: vec![rule.state(orbits.len())?] });
        }
        p.eval_checked(orbits[j].at(f, i)?)
    };

    let mut inner_over_iterates = Vec::new();
    let outer_a = detect_limit(
        |j| {
            let l = detect_limit(|i| value(i, j), inner_tol, caps.iterates)?;
            inner_over_iterates.push(l);
            Ok(l.value)
        },
        inner_tol,
        caps.states,
    )?;

    let mut inner_over_states = Vec::new();
    let outer_b = detect_limit(
        |i| {
            let l = detect_limit(|j| value(i, j), inner_tol, caps.states)?;
            inner_over_states.push(l);
            Ok(l.value)
        },
        inner_tol,
        caps.iterates,
    )?;

    Ok(LimitExchangeReport {
        a: outer_a.value,
        b: outer_b.value,
        discrepancy: (outer_a.value - outer_b.value).abs(),
        inner_over_iterates,
        inner_over_states,
        outer_a,
        outer_b,
        caps,
        inner_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::{averaging_map, LayerFunctionSpec};

    fn s(c: &[f64]) -> LayerState {
        LayerState::new(c.to_vec()).unwrap()
    }

    const CAPS: Caps = Caps { iterates: 200, states: 200 };

    #[test]
    fn square_limits_do_not_exchange() {
        let p = PredicateSpec::coordinate("P0", 0);
        // v_j = 1 - 2^-j
        let rule = GeometricRule::new(s(&[0.0]), s(&[1.0]), 0.5).unwrap();
        let r = limit_exchange_test(&LayerFunctionSpec::Square, &p, &rule, 1e-9, CAPS).unwrap();
        assert!(r.a.abs() < 1e-9, "{}", r.a);
        assert!((r.b - 1.0).abs() < 1e-6, "{}", r.b);
        assert!((r.discrepancy - 1.0).abs() < 0.05);
        assert!(r.outer_a.detected && r.outer_b.detected);
    }

    #[test]
    fn identity_and_averaging_exchange() {
        let p = PredicateSpec::coordinate("P0", 0);
        let rule = GeometricRule::new(s(&[0.2]), s(&[0.7]), 0.5).unwrap();
        let r = limit_exchange_test(&LayerFunctionSpec::Identity, &p, &rule, 1e-9, CAPS).unwrap();
        assert!((r.a - 0.7).abs() < 1e-8 && (r.b - 0.7).abs() < 1e-8);
        assert!(r.discrepancy < 1e-8);

        // the limit map is the projection ((u0 + 2 u1) / 3) (1, 1)
        let rule = GeometricRule::new(s(&[1.0, -1.0]), s(&[0.0, 0.9]), 0.5).unwrap();
        let r = limit_exchange_test(&averaging_map(), &p, &rule, 1e-9, CAPS).unwrap();
        assert!(r.discrepancy <= 1e-6, "{r:?}");
        assert!((r.a - 0.6).abs() < 1e-6);
        assert!(r.all_detected());
    }

    #[test]
    fn chaotic_inner_limits_are_flagged() {
        let p = PredicateSpec::coordinate("P0", 0);
        let rule = GeometricRule::new(s(&[0.1]), s(&[0.3]), 0.5).unwrap();
        let r = limit_exchange_test(&LayerFunctionSpec::Logistic, &p, &rule, 1e-9, Caps { iterates: 50, states: 50 }).unwrap();
        assert!(!r.all_detected());
        assert!(r.inner_over_iterates.iter().any(|l| !l.detected));
    }

    #[test]
    fn bad_arguments() {
        let p = PredicateSpec::coordinate("P0", 0);
        let rule = GeometricRule::new(s(&[0.0]), s(&[1.0]), 0.5).unwrap();
        let small = Caps { iterates: 8, states: 200 };
        assert!(limit_exchange_test(&LayerFunctionSpec::Square, &p, &rule, 1e-9, small).is_err());
        assert!(GeometricRule::new(s(&[0.0]), s(&[1.0]), 1.0).is_err());
        assert!(GeometricRule::new(s(&[0.0]), s(&[1.0, 2.0]), 0.5).is_err());
    }

    #[test]
    fn detection_needs_consecutive_stability() {
        // differences 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0
        let seq = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let l = detect_limit(|n| Ok(seq[n]), 1e-9, seq.len() - 1).unwrap();
        assert_eq!(l, DetectedLimit { value: 2.0, detected: true, terms: 12 });
    }
}
