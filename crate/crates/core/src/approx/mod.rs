//! Numerical deep equilibria on compact disks.
//!
//! A deep equilibrium is idempotent, so the finite-budget check used
//! throughout is the doubling residual `|P(f^{2N}(v)) - P(f^N(v))|`, which is
//! exactly the idempotence defect of `f^N` at `v`. Equilibria are kept as
//! tables on sample states; no closed form is ever assumed.

mod closure;
mod cycle;
mod equicontinuity;
mod newton;
mod subsequence;

pub use closure::{close_under, Closure, DEFAULT_DEDUP_TOL};
pub use cycle::{cycle_detect, CycleOutcome, CycleReport};
pub use equicontinuity::{
    equicontinuity_estimate, EquicontinuityEstimate, EquicontinuityOptions, EquicontinuityVerdict,
    ScheduleRatios,
};
pub use newton::{newton_basins, newton_map, newton_predicates, BasinCell, BasinGrid, NewtonBasinOptions};
pub use subsequence::{sequential_subsequence, CertificateLevel, SubsequenceCertificate};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::StateMap;
use crate::structure::{sup_pseudometric, LayerState, PredicateSpec};

/// Default tolerance for matching a state against table keys.
pub const TABLE_MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub input: LayerState,
    pub output: LayerState,
}

/// An extensional map on finitely many states.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateTable {
    pub entries: Vec<TableEntry>,
}

impl StateTable {
    pub fn insert(&mut self, input: LayerState, output: LayerState) {
        self.entries.push(TableEntry { input, output });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &LayerState> {
        self.entries.iter().map(|e| &e.input)
    }

    /// Exact key match, else the nearest key within `tol` in sup distance.
    pub fn lookup(&self, v: &LayerState, tol: f64) -> Option<&LayerState> {
        if let Some(e) = self.entries.iter().find(|e| &e.input == v) {
            return Some(&e.output);
        }
        self.entries
            .iter()
            .filter(|e| e.input.dim() == v.dim())
            .map(|e| (e.input.sup_distance(v), e))
            .filter(|(d, _)| *d < tol)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| &e.output)
    }
}

impl StateMap for StateTable {
    fn apply(&self, v: &LayerState) -> Result<LayerState> {
        self.lookup(v, TABLE_MATCH_TOL)
            .cloned()
            .ok_or_else(|| Error::MissingTableEntry(v.coords().to_vec()))
    }
}

/// Iterate counts tried by the convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `N = 1, 2, 4, 8, ...`
    #[default]
    Doubling,
    /// `N = lcm(1..k)`: 1, 2, 6, 12, 60, ... Every cycle length up to `k`
    /// divides the `k`-th entry, so periodic orbits of any small period settle.
    LcmLadder,
}

impl Schedule {
    /// The first `levels` iterate counts, stopping early on `u64` overflow.
    pub fn counts(self, levels: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(levels);
        match self {
            Schedule::Doubling => {
                let mut n = 1u64;
                while out.len() < levels {
                    out.push(n);
                    match n.checked_mul(2) {
                        Some(next) => n = next,
                        None => break,
                    }
                }
            }
            Schedule::LcmLadder => {
                let mut n = 1u64;
                let mut j = 2u64;
                out.push(1);
                while out.len() < levels {
                    let g = num_integer::gcd(n, j);
                    match (n / g).checked_mul(j) {
                        Some(next) if next != n => {
                            n = next;
                            out.push(n);
                        }
                        Some(_) => {}
                        None => break,
                    }
                    j += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    pub tol: f64,
    /// Number of schedule entries beyond the first, so `Doubling` tries
    /// `N = 1, ..., 2^max_levels`.
    pub max_levels: usize,
    #[serde(default)]
    pub schedule: Schedule,
}

impl EquilibriumOptions {
    pub fn doubling(tol: f64, max_doublings: usize) -> Self {
        EquilibriumOptions { tol, max_levels: max_doublings, schedule: Schedule::Doubling }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    /// Every schedule entry was tried without meeting the tolerance.
    NonConvergence { levels_tried: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub n: u64,
    pub residual: f64,
}

/// Result of the doubling test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxEquilibrium {
    /// Last iterate count tried (the converged one when `Converged`).
    pub n: u64,
    /// `v -> f^n(v)` for each sample, in sample order.
    pub table: StateTable,
    /// Max over samples and predicates of `|P(f^{2n}(v)) - P(f^n(v))|`.
    pub residual: f64,
    pub status: ConvergenceStatus,
    pub tol: f64,
    pub history: Vec<ScheduleStep>,
}

impl ApproxEquilibrium {
    pub fn converged(&self) -> bool {
        self.status == ConvergenceStatus::Converged
    }
}

fn advance<F: StateMap + ?Sized>(f: &F, x: &LayerState, steps: u64) -> Result<LayerState> {
    let mut x = x.clone();
    for _ in 0..steps {
        x = f.apply(&x)?;
    }
    Ok(x)
}

fn check_samples(samples: &[LayerState], preds: &[PredicateSpec]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("samples must be nonempty".into()))?;
    let d = first.dim();
    for v in samples {
        v.expect_dim(d)?;
    }
    crate::structure::validate_predicates(preds, d)?;
    Ok(d)
}

/// Tries `N = 1, 2, 4, ..., 2^max_doublings` and stops at the first `N`
/// whose doubling residual is within `tol`.
pub fn iterate_until_equilibrium<F: StateMap + Sync + ?Sized>(
    f: &F,
    samples: &[LayerState],
    preds: &[PredicateSpec],
    tol: f64,
    max_doublings: usize,
) -> Result<ApproxEquilibrium> {
    iterate_until_equilibrium_with(f, samples, preds, &EquilibriumOptions::doubling(tol, max_doublings))
}

/// Convergence test with an explicit schedule. Samples are advanced in
/// parallel; each sample's orbit is sequential.
pub fn iterate_until_equilibrium_with<F: StateMap + Sync + ?Sized>(
    f: &F,
    samples: &[LayerState],
    preds: &[PredicateSpec],
    opts: &EquilibriumOptions,
) -> Result<ApproxEquilibrium> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    check_samples(samples, preds)?;
    let counts = opts.schedule.counts(opts.max_levels + 1);

    // current[i] = f^{pos}(samples[i])
    let mut current: Vec<LayerState> = samples.to_vec();
    let mut pos = 0u64;
    let mut history = Vec::with_capacity(counts.len());
    let mut at_n = current.clone();
    let mut residual = f64::INFINITY;
    let mut n = 0;

    let step_all = |states: &[LayerState], steps: u64| -> Result<Vec<LayerState>> {
        states
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                advance(f, x, steps).map_err(|e| Error::Sample {
                    index: i,
                    state: samples[i].coords().to_vec(),
                    source: Box::new(e),
                })
            })
            .collect()
    };

    for &count in &counts {
        n = count;
        at_n = step_all(&current, n - pos)?;
        let at_2n = step_all(&at_n, n)?;
        pos = 2 * n;
        residual = at_n
            .iter()
            .zip(&at_2n)
            .map(|(a, b)| sup_pseudometric(preds, a, b))
            .fold(0.0, f64::max);
        history.push(ScheduleStep { n, residual });
        current = at_2n;
        if residual <= opts.tol {
            break;
        }
    }

    let status = if residual <= opts.tol {
        ConvergenceStatus::Converged
    } else {
        ConvergenceStatus::NonConvergence { levels_tried: history.len() }
    };
    let table = StateTable {
        entries: samples
            .iter()
            .cloned()
            .zip(at_n)
            .map(|(input, output)| TableEntry { input, output })
            .collect(),
    };
    Ok(ApproxEquilibrium { n, table, residual, status, tol: opts.tol, history })
}

/// `max_{v, P} |P(g(g(v))) - P(g(v))|`.
pub fn idempotence_residual<F: StateMap + ?Sized>(
    g: &F,
    samples: &[LayerState],
    preds: &[PredicateSpec],
) -> Result<f64> {
    check_samples(samples, preds)?;
    let mut worst: f64 = 0.0;
    for v in samples {
        let once = g.apply(v)?;
        let twice = g.apply(&once)?;
        worst = worst.max(sup_pseudometric(preds, &once, &twice));
    }
    Ok(worst)
}

/// The pointwise limit map `v -> f^N(v)` found by the convergence test at
/// each point it is asked about. Fails where the test does not converge.
pub struct LimitMap<'a, F: ?Sized> {
    pub f: &'a F,
    pub preds: &'a [PredicateSpec],
    pub options: EquilibriumOptions,
}

impl<F: StateMap + Sync + ?Sized> StateMap for LimitMap<'_, F> {
    fn apply(&self, v: &LayerState) -> Result<LayerState> {
        let eq = iterate_until_equilibrium_with(self.f, std::slice::from_ref(v), self.preds, &self.options)?;
        if !eq.converged() {
            return Err(Error::NotConverged { residual: eq.residual });
        }
        Ok(eq.table.entries.into_iter().next().expect("one sample").output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{deep_equilibrium_finite, FiniteMap};
    use crate::function::{averaging_map, iterate, LayerFunctionSpec};
    use proptest::prelude::*;

    fn s(c: &[f64]) -> LayerState {
        LayerState::new(c.to_vec()).unwrap()
    }

    fn p1() -> Vec<PredicateSpec> {
        PredicateSpec::coordinates(1)
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Doubling.counts(5), vec![1, 2, 4, 8, 16]);
        assert_eq!(Schedule::LcmLadder.counts(7), vec![1, 2, 6, 12, 60, 420, 840]);
        assert_eq!(Schedule::Doubling.counts(100).len(), 64);
    }

    #[test]
    fn square_on_unit_interval() {
        let samples = [s(&[0.0]), s(&[0.5]), s(&[1.0])];
        let eq = iterate_until_equilibrium(&LayerFunctionSpec::Square, &samples, &p1(), 1e-9, 20).unwrap();
        assert!(eq.converged());
        // oracle: first N = 2^k with |0.5^(2^(2N)) - 0.5^(2^N)| <= 1e-9
        let expected_n = (0..20)
            .map(|k| 1u64 << k)
            .find(|&n| (0.5f64.powf(2f64.powi(2 * n as i32)) - 0.5f64.powf(2f64.powi(n as i32))).abs() <= 1e-9)
            .unwrap();
        assert_eq!(eq.n, expected_n);
        let outs: Vec<f64> = eq.table.entries.iter().map(|e| e.output.coords()[0]).collect();
        assert_eq!(outs[0], 0.0);
        assert!(outs[1] < 1e-9);
        assert_eq!(outs[2], 1.0);
        assert!(eq.residual <= 1e-9);
    }

    #[test]
    fn averaging_map_converges_to_projection() {
        let preds = PredicateSpec::coordinates(2);
        let eq = iterate_until_equilibrium(&averaging_map(), &[s(&[0.0, 0.9])], &preds, 1e-8, 20).unwrap();
        assert!(eq.converged());
        let w = eq.table.entries[0].output.coords();
        // limit ((u0 + 2 u1) / 3) (1, 1)
        assert!((w[0] - 0.6).abs() < 1e-8 && (w[1] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn logistic_chaos_does_not_converge() {
        let eq = iterate_until_equilibrium(&LayerFunctionSpec::Logistic, &[s(&[0.3])], &p1(), 1e-6, 20).unwrap();
        assert_eq!(eq.status, ConvergenceStatus::NonConvergence { levels_tried: 21 });
        assert_eq!(eq.history.len(), 21);
        assert_eq!(eq.n, 1 << 20);
    }

    #[test]
    fn logistic_fixed_point() {
        let eq = iterate_until_equilibrium(&LayerFunctionSpec::Logistic, &[s(&[0.75])], &p1(), 1e-12, 20).unwrap();
        assert!(eq.converged());
        assert_eq!(eq.n, 1);
        assert_eq!(eq.table.entries[0].output, s(&[0.75]));
    }

    #[test]
    fn bad_inputs() {
        assert!(iterate_until_equilibrium(&LayerFunctionSpec::Square, &[], &p1(), 1e-9, 5).is_err());
        assert!(iterate_until_equilibrium(&LayerFunctionSpec::Square, &[s(&[0.1])], &p1(), 0.0, 5).is_err());
        let f = LayerFunctionSpec::NewtonStep { coeffs: vec![1.0, 0.0, -1.0], critical_tol: 1e-12 };
        let err = iterate_until_equilibrium(&f, &[s(&[1.0, 0.0]), s(&[0.0, 0.0])], &PredicateSpec::coordinates(2), 1e-9, 5)
            .unwrap_err();
        assert!(matches!(err, Error::Sample { index: 1, .. }));
        assert!(err.is_evaluation());
    }

    #[test]
    fn idempotence_residual_examples() {
        let samples = [s(&[0.5]), s(&[0.9])];
        assert_eq!(idempotence_residual(&LayerFunctionSpec::Identity, &samples, &p1()).unwrap(), 0.0);
        let g = iterate(&LayerFunctionSpec::Square, 5);
        assert!(idempotence_residual(&g, &[s(&[0.5])], &p1()).unwrap() <= 1e-9);
        // 0.9^32 is about 0.034, so g is far from idempotent there
        let r = idempotence_residual(&g, &samples, &p1()).unwrap();
        assert!((r - (0.9f64.powi(32) - 0.9f64.powi(1024))).abs() < 1e-15);
        // |f(f(0.3)) - f(0.3)| with f(0.3) = 0.84, f(0.84) = 0.5376
        let r = idempotence_residual(&LayerFunctionSpec::Logistic, &[s(&[0.3])], &p1()).unwrap();
        assert!((r - 0.3024).abs() < 1e-12);
    }

    #[test]
    fn state_table_lookup() {
        let mut t = StateTable::default();
        t.insert(s(&[0.5]), s(&[0.0]));
        assert_eq!(t.apply(&s(&[0.5])).unwrap(), s(&[0.0]));
        assert_eq!(t.apply(&s(&[0.5 + 1e-12])).unwrap(), s(&[0.0]));
        assert!(t.apply(&s(&[0.6])).is_err());
    }

    #[test]
    fn limit_map_matches_table() {
        let preds = p1();
        let lm = LimitMap { f: &LayerFunctionSpec::Square, preds: &preds, options: EquilibriumOptions::doubling(1e-12, 30) };
        assert_eq!(lm.apply(&s(&[1.0])).unwrap(), s(&[1.0]));
        assert!(lm.apply(&s(&[0.3])).unwrap().coords()[0] < 1e-12);
        let chaotic = LimitMap { f: &LayerFunctionSpec::Logistic, preds: &preds, options: EquilibriumOptions::doubling(1e-9, 12) };
        assert!(matches!(chaotic.apply(&s(&[0.3])), Err(Error::NotConverged { .. })));
    }

    fn finite_case(f: &FiniteMap, schedule: Schedule) -> Option<(FiniteMap, Vec<u32>)> {
        let spec = LayerFunctionSpec::FiniteMap { table: f.clone() };
        let samples: Vec<_> = (1..=f.len()).map(|i| s(&[i as f64])).collect();
        let opts = EquilibriumOptions { tol: 0.5, max_levels: 12, schedule };
        let eq = iterate_until_equilibrium_with(&spec, &samples, &p1(), &opts).unwrap();
        eq.converged().then(|| {
            let table = eq.table.entries.iter().map(|e| e.output.coords()[0] as u32).collect();
            (deep_equilibrium_finite(f).unwrap().f_star, table)
        })
    }

    proptest! {
        #[test]
        fn doubling_soundness(x in 0.0f64..1.0, y in -1.0f64..1.0) {
            let preds = PredicateSpec::coordinates(2);
            let eq = iterate_until_equilibrium(&averaging_map(), &[s(&[x, y])], &preds, 1e-9, 30).unwrap();
            prop_assert!(eq.converged());
            let g = iterate(&averaging_map(), eq.n);
            let once = g.eval(&s(&[x, y])).unwrap();
            let twice = g.eval(&once).unwrap();
            prop_assert!(sup_pseudometric(&preds, &once, &twice) <= 1e-9);
            prop_assert_eq!(&once, &eq.table.entries[0].output);
        }

        #[test]
        fn finite_maps_reproduce_exact_equilibrium(
            table in (1usize..=10).prop_flat_map(|m| prop::collection::vec(1..=m as u32, m))
        ) {
            let f = FiniteMap::new(table).unwrap();
            // every cycle length up to 10 divides the 12th ladder entry
            let (exact, approx) = finite_case(&f, Schedule::LcmLadder).expect("ladder converges");
            prop_assert_eq!(exact.table(), &approx[..]);
            // doubling agrees whenever it converges
            if let Some((exact, approx)) = finite_case(&f, Schedule::Doubling) {
                prop_assert_eq!(exact.table(), &approx[..]);
            }
        }
    }

    #[test]
    fn doubling_never_settles_on_odd_cycles() {
        let f = FiniteMap::new(vec![2, 3, 1]).unwrap();
        assert!(finite_case(&f, Schedule::Doubling).is_none());
        let (exact, approx) = finite_case(&f, Schedule::LcmLadder).unwrap();
        assert_eq!(exact.table(), &approx[..]);
    }
}
