//! Uniform approximation of a tabulated predicate by explicit predicates.
//!
//! Candidates are built from the training half of the grid (even positions
//! along the atomic's axis, plus the last point) and judged on the whole
//! grid. Built from every grid value, a piecewise-linear candidate would
//! interpolate any finite table, jumps included; holding points out makes a
//! jump cost at least half its height.

use serde::{Deserialize, Serialize};

use super::explicit::{eval_explicit, Catalog, ExplicitPredicate};
use crate::error::{Error, Result};
use crate::structure::LayerState;

pub const DEFAULT_NODE_BUDGET: usize = 256;
/// Anchors or knots the lattice families start with, plus one.
pub const INITIAL_SEGMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    /// `max` of tangent lines; exact on convex targets up to the anchor gap.
    MaxOfTangents,
    /// `min` of tangent lines, for concave targets.
    MinOfTangents,
    /// Piecewise-linear interpolant written as a `max` of `min`s of its pieces.
    PiecewiseLinear,
    /// Least-squares affine combination of all atomics.
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitStatus {
    Fitted { expr: ExplicitPredicate, achieved_sup_error: f64 },
    Failed { best_error: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitAttempt {
    pub family: FitFamily,
    /// Index into the atomics list; `None` for the affine family.
    pub atomic: Option<usize>,
    pub nodes: usize,
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub status: FitStatus,
    pub epsilon: f64,
    pub validation_size: usize,
    pub training_size: usize,
    pub attempts: Vec<FitAttempt>,
}

impl FitResult {
    pub fn fitted(&self) -> bool {
        matches!(self.status, FitStatus::Fitted { .. })
    }

    pub fn error(&self) -> f64 {
        match self.status {
            FitStatus::Fitted { achieved_sup_error, .. } => achieved_sup_error,
            FitStatus::Failed { best_error } => best_error,
        }
    }

    /// Re-evaluates a fitted expression on the grid; true iff it reproduces
    /// the stored error exactly and that error is below epsilon.
    pub fn verify(&self, target: &[(LayerState, f64)], catalog: &Catalog) -> Result<bool> {
        let FitStatus::Fitted { expr, achieved_sup_error } = &self.status else { return Ok(false) };
        let err = sup_error(expr, target, catalog)?;
        Ok(err == *achieved_sup_error && err < self.epsilon)
    }
}

/// `max_v |expr(v) - target(v)|` over the grid.
pub fn sup_error(expr: &ExplicitPredicate, target: &[(LayerState, f64)], catalog: &Catalog) -> Result<f64> {
    target.iter().try_fold(0.0f64, |acc, (v, y)| Ok(acc.max((eval_explicit(expr, v, catalog)? - y).abs())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Line {
    slope: f64,
    intercept: f64,
}

impl Line {
    fn at(self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }

    fn expr(self, atomic: &ExplicitPredicate) -> ExplicitPredicate {
        let scaled = match self.slope {
            s if s == 0.0 => None,
            s if s == 1.0 => Some(atomic.clone()),
            s => Some(ExplicitPredicate::scale(s, atomic.clone())),
        };
        match (scaled, self.intercept) {
            (None, c) => ExplicitPredicate::constant(c),
            (Some(e), c) if c == 0.0 => e,
            (Some(e), c) => ExplicitPredicate::add(vec![e, ExplicitPredicate::constant(c)]),
        }
    }
}

/// Grid data seen through one atomic.
struct Axis {
    /// `(t, y)` for every grid point, sorted by `t`.
    points: Vec<(f64, f64)>,
    /// Distinct `t` values with averaged `y`, then thinned to the training set.
    train: Vec<(f64, f64)>,
}

impl Axis {
    fn new(ts: &[f64], ys: &[f64]) -> Option<Axis> {
        let mut points: Vec<(f64, f64)> = ts.iter().copied().zip(ys.iter().copied()).collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut distinct: Vec<(f64, f64, usize)> = Vec::new();
        for &(t, y) in &points {
            match distinct.last_mut() {
                Some(last) if last.0 == t => {
                    last.1 += y;
                    last.2 += 1;
                }
                _ => distinct.push((t, y, 1)),
            }
        }
        if distinct.len() < 2 {
            return None;
        }
        let last = distinct.len() - 1;
        let train = distinct
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == 0 || *i == last)
            .map(|(_, &(t, y, n))| (t, y / n as f64))
            .collect();
        Some(Axis { points, train })
    }

    fn initial_nodes(&self) -> Vec<usize> {
        let last = self.train.len() - 1;
        let mut nodes: Vec<usize> = (0..=INITIAL_SEGMENTS)
            .map(|r| ((r * last) as f64 / INITIAL_SEGMENTS as f64).round() as usize)
            .collect();
        nodes.dedup();
        nodes
    }

    /// Central difference on training neighbours, one-sided at the ends.
    fn tangent(&self, m: usize) -> Line {
        let lo = m.saturating_sub(1);
        let hi = (m + 1).min(self.train.len() - 1);
        let (t0, y0) = self.train[lo];
        let (t1, y1) = self.train[hi];
        let slope = (y1 - y0) / (t1 - t0);
        let (t, y) = self.train[m];
        Line { slope, intercept: y - slope * t }
    }

    fn worst(&self, values: &[f64]) -> (usize, f64) {
        self.points
            .iter()
            .zip(values)
            .map(|(&(_, y), v)| (v - y).abs())
            .enumerate()
            .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc })
    }

    /// Nearest training index to `t` that is not yet a node.
    fn nearest_free(&self, t: f64, used: &[bool]) -> Option<usize> {
        let start = self.train.partition_point(|p| p.0 < t);
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |i: usize| {
            if !used[i] {
                let d = (self.train[i].0 - t).abs();
                if best.is_none_or(|b| d < b.1) {
                    best = Some((i, d));
                }
            }
        };
        for i in (0..start).rev() {
            if !used[i] {
                consider(i);
                break;
            }
        }
        for i in start..self.train.len() {
            if !used[i] {
                consider(i);
                break;
            }
        }
        best.map(|b| b.0)
    }
}

/// Greedy refinement shared by every lattice family: add the free training
/// node nearest to the worst grid point until the error drops below
/// `epsilon`, the budget is spent or no node is left.
fn refine(
    axis: &Axis,
    epsilon: f64,
    budget: usize,
    mut values_for: impl FnMut(&[usize]) -> Vec<f64>,
) -> (Vec<usize>, f64) {
    let mut nodes = axis.initial_nodes();
    let mut used = vec![false; axis.train.len()];
    for &n in &nodes {
        used[n] = true;
    }
    loop {
        let values = values_for(&nodes);
        let (worst, err) = axis.worst(&values);
        if err < epsilon || nodes.len() >= budget {
            return (nodes, err);
        }
        match axis.nearest_free(axis.points[worst].0, &used) {
            Some(n) => {
                used[n] = true;
                nodes.push(n);
            }
            None => return (nodes, err),
        }
    }
}

fn tangent_lines(axis: &Axis, nodes: &[usize]) -> Vec<Line> {
    let mut lines: Vec<Line> = Vec::with_capacity(nodes.len());
    for &n in nodes {
        let l = axis.tangent(n);
        if !lines.contains(&l) {
            lines.push(l);
        }
    }
    lines
}

fn envelope(lines: &[Line], t: f64, upper: bool) -> f64 {
    let vals = lines.iter().map(|l| l.at(t));
    if upper {
        vals.fold(f64::NEG_INFINITY, f64::max)
    } else {
        vals.fold(f64::INFINITY, f64::min)
    }
}

/// Drops lines that never decide the envelope at any grid point, so the
/// pruned envelope is bit-identical on the grid.
fn prune(mut lines: Vec<Line>, ts: &[f64], upper: bool) -> Vec<Line> {
    let mut i = 0;
    while i < lines.len() && lines.len() > 1 {
        let l = lines[i];
        let others: Vec<Line> = lines.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| *l).collect();
        let needed = ts.iter().any(|&t| {
            let rest = envelope(&others, t, upper);
            if upper {
                l.at(t) > rest
            } else {
                l.at(t) < rest
            }
        });
        if needed {
            i += 1;
        } else {
            lines.remove(i);
        }
    }
    lines
}

fn envelope_expr(lines: &[Line], atomic: &ExplicitPredicate, upper: bool) -> ExplicitPredicate {
    let mut exprs: Vec<ExplicitPredicate> = lines.iter().map(|l| l.expr(atomic)).collect();
    if exprs.len() == 1 {
        return exprs.pop().expect("one line");
    }
    if upper {
        ExplicitPredicate::max(exprs)
    } else {
        ExplicitPredicate::min(exprs)
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let k = knots.partition_point(|p| p.0 < t).clamp(1, knots.len() - 1);
    let ((t0, y0), (t1, y1)) = (knots[k - 1], knots[k]);
    if t == t1 {
        return y1;
    }
    y0 + (y1 - y0) * (t - t0) / (t1 - t0)
}

fn sorted_knots(axis: &Axis, nodes: &[usize]) -> Vec<(f64, f64)> {
    let mut idx = nodes.to_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| axis.train[i]).collect()
}

/// The interpolant as `max_i min_{j in S_i} l_j` where `S_i` holds the pieces
/// lying on or above piece `i` over piece `i`'s interval.
fn max_min_expr(knots: &[(f64, f64)], atomic: &ExplicitPredicate) -> ExplicitPredicate {
    let mut pieces: Vec<(f64, f64, Line)> = Vec::new();
    for w in knots.windows(2) {
        let ((t0, y0), (t1, y1)) = (w[0], w[1]);
        let slope = (y1 - y0) / (t1 - t0);
        let line = Line { slope, intercept: y0 - slope * t0 };
        match pieces.last_mut() {
            Some(last) if last.2 == line => last.1 = t1,
            _ => pieces.push((t0, t1, line)),
        }
    }
    if pieces.len() == 1 {
        return pieces[0].2.expr(atomic);
    }
    let slack = |t: f64| 1e-12 * (1.0 + t.abs());
    let mut sets: Vec<Vec<usize>> = pieces
        .iter()
        .map(|&(a, b, li)| {
            (0..pieces.len())
                .filter(|&j| {
                    let lj = pieces[j].2;
                    lj.at(a) >= li.at(a) - slack(li.at(a)) && lj.at(b) >= li.at(b) - slack(li.at(b))
                })
                .collect()
        })
        .collect();
    sets.sort();
    sets.dedup();
    // a superset's min is never larger, so it never wins the max
    let keep: Vec<&Vec<usize>> = sets
        .iter()
        .filter(|s| !sets.iter().any(|o| o.len() < s.len() && o.iter().all(|j| s.contains(j))))
        .collect();
    let terms: Vec<ExplicitPredicate> = keep
        .into_iter()
        .map(|s| {
            let mut mins: Vec<ExplicitPredicate> = s.iter().map(|&j| pieces[j].2.expr(atomic)).collect();
            if mins.len() == 1 {
                mins.pop().expect("one piece")
            } else {
                ExplicitPredicate::min(mins)
            }
        })
        .collect();
    if terms.len() == 1 {
        terms.into_iter().next().expect("one term")
    } else {
        ExplicitPredicate::max(terms)
    }
}

/// Solves the normal equations of `y ~ w . x + b` by Gaussian elimination.
fn least_squares(rows: &[Vec<f64>], ys: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first()?.len() + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (x, y) in rows.iter().zip(ys) {
        let xb: Vec<f64> = x.iter().copied().chain([1.0]).collect();
        for r in 0..k {
            for c in 0..k {
                a[r][c] += xb[r] * xb[c];
            }
            a[r][k] += xb[r] * y;
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..k).map(|r| a[r][k] / a[r][r]).collect())
}

fn affine_expr(coef: &[f64], atomics: &[ExplicitPredicate]) -> ExplicitPredicate {
    let (w, b) = coef.split_at(atomics.len());
    let mut terms: Vec<ExplicitPredicate> = w
        .iter()
        .zip(atomics)
        .filter(|(w, _)| **w != 0.0)
        .map(|(&w, a)| if w == 1.0 { a.clone() } else { ExplicitPredicate::scale(w, a.clone()) })
        .collect();
    if b[0] != 0.0 || terms.is_empty() {
        terms.push(ExplicitPredicate::constant(b[0]));
    }
    if terms.len() == 1 {
        terms.pop().expect("one term")
    } else {
        ExplicitPredicate::add(terms)
    }
}

/// Searches the max/min lattice over affine combinations of `atomics` for an
/// expression within `epsilon` of `target` everywhere on the grid.
pub fn fit_uniform_approximation(
    target: &[(LayerState, f64)],
    atomics: &[ExplicitPredicate],
    catalog: &Catalog,
    epsilon: f64,
    budget: usize,
) -> Result<FitResult> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("the target grid is empty".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be > 0".into()));
    }
    if budget < 2 {
        return Err(Error::InvalidArgument("node budget must be >= 2".into()));
    }
    if atomics.is_empty() {
        return Err(Error::InvalidArgument("at least one atomic predicate is required".into()));
    }
    for a in atomics {
        if !matches!(a, ExplicitPredicate::Atomic { .. }) {
            return Err(Error::InvalidArgument("atomics must be atomic predicates".into()));
        }
        catalog.validate(a)?;
    }
    if let Some((_, y)) = target.iter().find(|(_, y)| !y.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite target value {y}")));
    }
    let ys: Vec<f64> = target.iter().map(|(_, y)| *y).collect();
    let features: Vec<Vec<f64>> = atomics
        .iter()
        .map(|a| target.iter().map(|(v, _)| eval_explicit(a, v, catalog)).collect())
        .collect::<Result<_>>()?;

    let mut attempts = Vec::new();
    let mut training_size = 0;
    let done = |family, atomic, nodes, expr: Option<ExplicitPredicate>, err: f64, attempts: &mut Vec<FitAttempt>| -> Result<Option<FitStatus>> {
        if let Some(expr) = expr.filter(|_| err < epsilon) {
            let exact = sup_error(&expr, target, catalog)?;
            attempts.push(FitAttempt { family, atomic, nodes, sup_error: exact });
            if exact < epsilon {
                return Ok(Some(FitStatus::Fitted { expr, achieved_sup_error: exact }));
            }
        } else {
            attempts.push(FitAttempt { family, atomic, nodes, sup_error: err });
        }
        Ok(None)
    };

    for (k, atomic) in atomics.iter().enumerate() {
        let Some(axis) = Axis::new(&features[k], &ys) else { continue };
        training_size = training_size.max(axis.train.len());
        let ts: Vec<f64> = axis.points.iter().map(|p| p.0).collect();

        for (family, upper) in [(FitFamily::MaxOfTangents, true), (FitFamily::MinOfTangents, false)] {
            let (nodes, err) = refine(&axis, epsilon, budget, |nodes| {
                let lines = tangent_lines(&axis, nodes);
                ts.iter().map(|&t| envelope(&lines, t, upper)).collect()
            });
            let expr = (err < epsilon).then(|| {
                let lines = prune(tangent_lines(&axis, &nodes), &ts, upper);
                envelope_expr(&lines, atomic, upper)
            });
            if let Some(status) = done(family, Some(k), nodes.len(), expr, err, &mut attempts)? {
                return Ok(FitResult { status, epsilon, validation_size: target.len(), training_size, attempts });
            }
        }

        let (nodes, err) = refine(&axis, epsilon, budget, |nodes| {
            let knots = sorted_knots(&axis, nodes);
            ts.iter().map(|&t| interpolate(&knots, t)).collect()
        });
        let expr = (err < epsilon).then(|| max_min_expr(&sorted_knots(&axis, &nodes), atomic));
        if let Some(status) = done(FitFamily::PiecewiseLinear, Some(k), nodes.len(), expr, err, &mut attempts)? {
            return Ok(FitResult { status, epsilon, validation_size: target.len(), training_size, attempts });
        }
    }

    let last = target.len() - 1;
    let train: Vec<usize> = (0..target.len()).filter(|i| i % 2 == 0 || *i == last).collect();
    training_size = training_size.max(train.len());
    let rows: Vec<Vec<f64>> = train.iter().map(|&i| features.iter().map(|f| f[i]).collect()).collect();
    let train_y: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
    if let Some(coef) = least_squares(&rows, &train_y) {
        let expr = affine_expr(&coef, atomics);
        let err = sup_error(&expr, target, catalog)?;
        if let Some(status) = done(FitFamily::Affine, None, coef.len(), Some(expr), err, &mut attempts)? {
            return Ok(FitResult { status, epsilon, validation_size: target.len(), training_size, attempts });
        }
    }

    let best_error = attempts.iter().map(|a| a.sup_error).fold(f64::INFINITY, f64::min);
    Ok(FitResult { status: FitStatus::Failed { best_error }, epsilon, validation_size: target.len(), training_size, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::PredicateSpec;

    type E = ExplicitPredicate;

    fn grid(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<(LayerState, f64)> {
        (0..n)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (LayerState::scalar(t).unwrap(), f(t))
            })
            .collect()
    }

    fn one_d() -> (Catalog, Vec<E>) {
        (Catalog::new(PredicateSpec::coordinates(1)), vec![E::predicate("P0")])
    }

    #[test]
    fn absolute_value_is_exact() {
        let (cat, atoms) = one_d();
        let target = grid(-1.0, 1.0, 1001, f64::abs);
        let r = fit_uniform_approximation(&target, &atoms, &cat, 1e-12, DEFAULT_NODE_BUDGET).unwrap();
        let FitStatus::Fitted { expr, achieved_sup_error } = &r.status else { panic!("{r:?}") };
        assert_eq!(*achieved_sup_error, 0.0);
        assert_eq!(expr, &E::max(vec![E::scale(-1.0, E::predicate("P0")), E::predicate("P0")]));
        assert!(r.verify(&target, &cat).unwrap());
    }

    #[test]
    fn square_by_eleven_tangents() {
        let (cat, atoms) = one_d();
        let target = grid(0.0, 1.0, 1001, |t| t * t);
        let r = fit_uniform_approximation(&target, &atoms, &cat, 0.01, DEFAULT_NODE_BUDGET).unwrap();
        assert!(r.fitted());
        assert_eq!(r.attempts[0].family, FitFamily::MaxOfTangents);
        assert_eq!(r.attempts[0].nodes, INITIAL_SEGMENTS + 1);
        // tangent gap h^2/4 for spacing h = 0.1
        assert!(r.error() <= 0.0025 + 1e-12, "{}", r.error());
        assert!(r.verify(&target, &cat).unwrap());
    }

    #[test]
    fn step_function_fails() {
        let (cat, atoms) = one_d();
        let target = grid(0.0, 1.0, 1001, |t| if t >= 0.5 { 1.0 } else { 0.0 });
        let r = fit_uniform_approximation(&target, &atoms, &cat, 0.1, DEFAULT_NODE_BUDGET).unwrap();
        assert!(!r.fitted());
        assert!(r.error() >= 0.4, "{}", r.error());
        assert!(!r.verify(&target, &cat).unwrap());
    }

    #[test]
    fn concave_and_affine_targets() {
        let (cat, atoms) = one_d();
        let target = grid(0.0, 1.0, 201, |t| t.sqrt());
        let r = fit_uniform_approximation(&target, &atoms, &cat, 0.05, DEFAULT_NODE_BUDGET).unwrap();
        assert!(r.fitted());
        assert!(r.verify(&target, &cat).unwrap());

        let cat = Catalog::new(PredicateSpec::coordinates(2));
        let atoms = vec![E::predicate("P0"), E::predicate("P1")];
        let target: Vec<_> = (0..21)
            .flat_map(|i| (0..21).map(move |j| (-1.0 + 0.1 * i as f64, -1.0 + 0.1 * j as f64)))
            .map(|(a, b)| (LayerState::new(vec![a, b]).unwrap(), (a + 2.0 * b) / 3.0))
            .collect();
        let r = fit_uniform_approximation(&target, &atoms, &cat, 0.1, DEFAULT_NODE_BUDGET).unwrap();
        assert!(r.fitted());
        assert_eq!(r.attempts.last().unwrap().family, FitFamily::Affine);
        assert!(r.error() < 1e-12);
    }

    #[test]
    fn pwl_max_min_form_matches_interpolation() {
        let knots = [(0.0, 0.0), (0.3, 1.0), (0.5, 0.2), (0.8, 0.9), (1.0, 0.9)];
        let expr = max_min_expr(&knots, &E::predicate("P0"));
        let cat = Catalog::new(PredicateSpec::coordinates(1));
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let v = eval_explicit(&expr, &LayerState::scalar(t).unwrap(), &cat).unwrap();
            assert!((v - interpolate(&knots, t)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn input_checks() {
        let (cat, atoms) = one_d();
        assert!(fit_uniform_approximation(&[], &atoms, &cat, 0.1, 256).is_err());
        let target = grid(0.0, 1.0, 11, |t| t);
        assert!(fit_uniform_approximation(&target, &atoms, &cat, 0.0, 256).is_err());
        assert!(fit_uniform_approximation(&target, &[E::constant(1.0)], &cat, 0.1, 256).is_err());
        assert!(fit_uniform_approximation(&target, &[E::predicate("Q")], &cat, 0.1, 256).is_err());
    }
}
