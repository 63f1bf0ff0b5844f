//! Task parameters (shared by flags and problem files) and their execution.

use std::path::Path;

use clap::{Args, FromArgMatches, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::problem::{parse_params, Coords, Resolved, Task};
use super::CliError;
use crate::approx::{
    equicontinuity_estimate, idempotence_residual, iterate_until_equilibrium_with, newton_basins,
    sequential_subsequence, EquicontinuityOptions, EquilibriumOptions, LimitMap, NewtonBasinOptions, Schedule,
};
use crate::definability::{
    continuity_probe, fit_uniform_approximation, limit_exchange_test, Caps, Catalog, ExplicitPredicate,
    GeometricRule, ProbeOptions,
};
use crate::finite::{deep_equilibrium_finite, verify_idempotent_finite, FiniteMap};
use crate::function::{iterate, LayerFunctionSpec};
use crate::sampling;
use crate::structure::{LayerState, PredicateSpec, Structure};

/// Parameter values with no flags given, so both front ends share one set of
/// defaults.
fn clap_defaults<T: Args + FromArgMatches>() -> T {
    let cmd = T::augment_args(clap::Command::new("defaults").no_binary_name(true));
    let m = cmd.try_get_matches_from(std::iter::empty::<&str>()).expect("every flag is optional");
    T::from_arg_matches(&m).expect("every flag is optional")
}

macro_rules! clap_default {
    ($($t:ty),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                clap_defaults()
            }
        })*
    };
}

clap_default!(
    ConvergenceArgs,
    FiniteParams,
    IterateParams,
    NewtonParams,
    ContinuityParams,
    LimitExchangeParams,
    FitParams,
    SubsequenceParams,
    EquicontinuityParams
);

fn states(coords: &[Coords]) -> Result<Vec<LayerState>, CliError> {
    coords.iter().map(|c| Ok(LayerState::new(c.0.clone())?)).collect()
}

fn state(c: &Option<Coords>, flag: &str) -> Result<LayerState, CliError> {
    let c = c.as_ref().ok_or_else(|| CliError::Usage(format!("`{flag}` is required")))?;
    Ok(LayerState::new(c.0.clone())?)
}

fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

/// A `u128` as a JSON number when it fits in `u64`, else as a decimal string.
fn wide(n: u128) -> Value {
    u64::try_from(n).map(Value::from).unwrap_or_else(|_| Value::String(n.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    #[default]
    Doubling,
    LcmLadder,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Doubling => Schedule::Doubling,
            ScheduleArg::LcmLadder => Schedule::LcmLadder,
        }
    }
}

/// The convergence test used wherever a deep equilibrium is approximated.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceArgs {
    /// Doubling-residual tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Schedule entries tried after the first.
    #[arg(long, default_value_t = 20)]
    pub max_doublings: usize,
    #[arg(long, value_enum, default_value_t)]
    pub schedule: ScheduleArg,
}

impl ConvergenceArgs {
    fn options(&self) -> EquilibriumOptions {
        EquilibriumOptions { tol: self.tol, max_levels: self.max_doublings, schedule: self.schedule.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteParams {
    /// 1-based table, e.g. `2,3,2,1` for 1->2, 2->3, 3->2, 4->1.
    #[arg(long, value_delimiter = ',')]
    pub map: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterateParams {
    /// A sample state as comma-separated coordinates; repeatable.
    #[arg(long = "state", allow_hyphen_values = true)]
    pub states: Vec<Coords>,
    /// Extra states drawn uniformly from the structure's disk.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[command(flatten)]
    pub convergence: ConvergenceArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonParams {
    /// Real polynomial coefficients, leading coefficient first:
    /// `1,0,-1` is z^2 - 1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coeffs: Vec<f64>,
    /// `xmin,xmax,ymin,ymax`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-2.0, 2.0, -2.0, 2.0])]
    pub grid: Vec<f64>,
    /// Points per axis, endpoints included.
    #[arg(long, default_value_t = 201)]
    pub res: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Step size at which an orbit counts as settled.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityParams {
    /// Probe center.
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<Coords>,
    #[arg(long, default_value_t = 0.01)]
    pub radius: f64,
    /// Number of probes.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Defaults to ten times `--tol`.
    #[arg(long)]
    pub dispersion_threshold: Option<f64>,
    /// Defaults to ten times `--tol`.
    #[arg(long)]
    pub gap_threshold: Option<f64>,
    #[command(flatten)]
    pub convergence: ConvergenceArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitExchangeParams {
    /// Predicate label; defaults to the first predicate.
    #[arg(long)]
    pub predicate: Option<String>,
    /// First state `v_0` of the sequence `v_j = target + (start - target) ratio^j`.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<Coords>,
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<Coords>,
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub inner_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub cap_iterates: usize,
    #[arg(long, default_value_t = 200)]
    pub cap_states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitTarget {
    /// `|v|`
    #[default]
    Abs,
    /// `v^2`
    Square,
    /// 1 on `v >= 0.5`, else 0.
    Step,
    /// `sqrt(v)`, needs a nonnegative domain.
    Sqrt,
    /// The chosen predicate of the deep equilibrium of the function.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    #[arg(long, value_enum, default_value_t)]
    pub target: FitTarget,
    /// Interval `lo,hi` of the one-dimensional target grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 1.0])]
    pub domain: Vec<f64>,
    /// Grid points, endpoints included.
    #[arg(long, default_value_t = 1001)]
    pub points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Node budget of the fitted expression.
    #[arg(long, default_value_t = crate::definability::DEFAULT_NODE_BUDGET)]
    pub budget: usize,
    /// Predicate read off the equilibrium target; defaults to the first.
    #[arg(long)]
    pub predicate: Option<String>,
    /// Explicit `(state, value)` target; problem files only. Overrides `target`.
    #[arg(skip)]
    pub samples: Option<Vec<(Coords, f64)>>,
    #[command(flatten)]
    pub convergence: ConvergenceArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsequenceParams {
    /// A state of the finite set to certify; repeatable.
    #[arg(long = "state", allow_hyphen_values = true)]
    pub states: Vec<Coords>,
    #[arg(long, default_value_t = 10)]
    pub levels: usize,
    /// Largest iterate count searched.
    #[arg(long, default_value_t = 1_000_000)]
    pub search_budget: u64,
    #[command(flatten)]
    pub convergence: ConvergenceArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquicontinuityParams {
    /// Strictly increasing iterate counts.
    #[arg(long = "iterates", value_delimiter = ',', default_values_t = [1u64, 2, 4, 8, 16])]
    pub schedule: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Defaults to 1e-6 times the widest side of the sampling box.
    #[arg(long)]
    pub pair_radius: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub growth_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskParams {
    Finite(FiniteParams),
    Iterate(IterateParams),
    NewtonBasins(NewtonParams),
    Continuity(ContinuityParams),
    LimitExchange(LimitExchangeParams),
    Fit(FitParams),
    Subsequence(SubsequenceParams),
    Equicontinuity(EquicontinuityParams),
}

impl TaskParams {
    pub fn from_value(task: Task, v: Value) -> Result<Self, CliError> {
        Ok(match task {
            Task::FiniteDeq => TaskParams::Finite(parse_params(v)?),
            Task::Iterate => TaskParams::Iterate(parse_params(v)?),
            Task::NewtonBasins => TaskParams::NewtonBasins(parse_params(v)?),
            Task::Continuity => TaskParams::Continuity(parse_params(v)?),
            Task::LimitExchange => TaskParams::LimitExchange(parse_params(v)?),
            Task::Fit => TaskParams::Fit(parse_params(v)?),
            Task::Subsequence => TaskParams::Subsequence(parse_params(v)?),
            Task::Equicontinuity => TaskParams::Equicontinuity(parse_params(v)?),
        })
    }

    pub fn task(&self) -> Task {
        match self {
            TaskParams::Finite(_) => Task::FiniteDeq,
            TaskParams::Iterate(_) => Task::Iterate,
            TaskParams::NewtonBasins(_) => Task::NewtonBasins,
            TaskParams::Continuity(_) => Task::Continuity,
            TaskParams::LimitExchange(_) => Task::LimitExchange,
            TaskParams::Fit(_) => Task::Fit,
            TaskParams::Subsequence(_) => Task::Subsequence,
            TaskParams::Equicontinuity(_) => Task::Equicontinuity,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            TaskParams::Finite(p) => json(p),
            TaskParams::Iterate(p) => json(p),
            TaskParams::NewtonBasins(p) => json(p),
            TaskParams::Continuity(p) => json(p),
            TaskParams::LimitExchange(p) => json(p),
            TaskParams::Fit(p) => json(p),
            TaskParams::Subsequence(p) => json(p),
            TaskParams::Equicontinuity(p) => json(p),
        }
    }
}

/// Runs the task and returns its `results` object. Grids go to `out`.
pub fn execute(r: &Resolved, out: Option<&Path>) -> Result<Value, CliError> {
    match &r.params {
        TaskParams::Finite(p) => finite(r, p),
        TaskParams::Iterate(p) => run_iterate(r, p),
        TaskParams::NewtonBasins(p) => basins(p, out),
        TaskParams::Continuity(p) => continuity(r, p),
        TaskParams::LimitExchange(p) => exchange(r, p),
        TaskParams::Fit(p) => fit(r, p),
        TaskParams::Subsequence(p) => subsequence(r, p),
        TaskParams::Equicontinuity(p) => equicontinuity(r, p),
    }
}

fn finite(r: &Resolved, p: &FiniteParams) -> Result<Value, CliError> {
    let f = match (&r.function, p.map.is_empty()) {
        (_, false) => FiniteMap::new(p.map.clone())?,
        (Some(LayerFunctionSpec::FiniteMap { table }), true) => table.clone(),
        _ => return Err(CliError::Usage("`--map` is required".into())),
    };
    let eq = deep_equilibrium_finite(&f)?;
    Ok(json!({
        "N": wide(eq.n),
        "f_star": eq.f_star,
        "tail_n": eq.analysis.tail_n,
        "order_K": wide(eq.analysis.order_k),
        "idempotent": verify_idempotent_finite(&eq.f_star),
        "core": eq.analysis.core,
        "cycle_lengths": eq.analysis.cycle_lengths,
    }))
}

/// Listed states followed by `samples` seeded draws from the disk.
fn sample_states(s: &Structure, listed: &[Coords], samples: usize, seed: u64) -> Result<Vec<LayerState>, CliError> {
    let mut out = states(listed)?;
    if samples > 0 {
        let b = s.sampling_box()?;
        let mut rng = sampling::rng(seed);
        for _ in 0..samples {
            out.push(sampling::uniform_in_disk(&b, &s.disk, &s.predicates, &mut rng)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("give at least one `--state` or `--samples N`".into()));
    }
    Ok(out)
}

fn run_iterate(r: &Resolved, p: &IterateParams) -> Result<Value, CliError> {
    let (f, s) = (r.function()?, r.structure()?);
    let samples = sample_states(s, &p.states, p.samples, r.seed)?;
    let eq = iterate_until_equilibrium_with(f, &samples, &s.predicates, &p.convergence.options())?;
    let residual = if eq.converged() {
        Some(idempotence_residual(&iterate(f, eq.n), &samples, &s.predicates)?)
    } else {
        None
    };
    Ok(json!({ "equilibrium": eq, "idempotence_residual": residual }))
}

fn basins(p: &NewtonParams, out: Option<&Path>) -> Result<Value, CliError> {
    if p.coeffs.is_empty() {
        return Err(CliError::Usage("`--coeffs` is required".into()));
    }
    let grid: [f64; 4] = p
        .grid
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Usage("`--grid` takes xmin,xmax,ymin,ymax".into()))?;
    let opts = NewtonBasinOptions { grid, res: p.res, max_iter: p.max_iter, tol: p.tol };
    let g = newton_basins(&p.coeffs, &opts)?;
    let mut per_root = vec![0usize; g.roots.len()];
    for c in &g.cells {
        if let Some(i) = c.root_index {
            per_root[i] += 1;
        }
    }
    if let Some(path) = out {
        let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        g.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let attributed: usize = per_root.iter().sum();
    Ok(json!({
        "roots": g.roots,
        "cells": g.cells.len(),
        "converged": g.converged_count(),
        "cells_per_root": per_root,
        "unattributed": g.cells.len() - attributed,
        "csv": out.map(|p| p.display().to_string()),
    }))
}

fn continuity(r: &Resolved, p: &ContinuityParams) -> Result<Value, CliError> {
    let (f, s) = (r.function()?, r.structure()?);
    let v = state(&p.at, "--at")?;
    let region = s.sampling_box().ok();
    let opts = ProbeOptions {
        radius: p.radius,
        k: p.k,
        seed: r.seed,
        equilibrium: p.convergence.options(),
        dispersion_threshold: p.dispersion_threshold,
        gap_threshold: p.gap_threshold,
    };
    Ok(json(&continuity_probe(f, &v, &s.predicates, region.as_ref(), &opts)?))
}

fn predicate<'a>(s: &'a Structure, label: &Option<String>) -> Result<&'a PredicateSpec, CliError> {
    match label {
        Some(l) => Ok(s.predicate(l)?),
        None => s.predicates.first().ok_or_else(|| CliError::Usage("the structure has no predicates".into())),
    }
}

fn exchange(r: &Resolved, p: &LimitExchangeParams) -> Result<Value, CliError> {
    let (f, s) = (r.function()?, r.structure()?);
    let rule = GeometricRule::new(state(&p.start, "--start")?, state(&p.target, "--target")?, p.ratio)?;
    let caps = Caps { iterates: p.cap_iterates, states: p.cap_states };
    let report = limit_exchange_test(f, predicate(s, &p.predicate)?, &rule, p.inner_tol, caps)?;
    Ok(json!({ "rule": rule, "report": report, "all_detected": report.all_detected() }))
}

fn grid_1d(domain: &[f64], points: usize) -> Result<Vec<f64>, CliError> {
    let &[lo, hi] = domain else {
        return Err(CliError::Usage("`--domain` takes lo,hi".into()));
    };
    if !(lo < hi) || points < 2 {
        return Err(CliError::Usage("`--domain` needs lo < hi and `--points` >= 2".into()));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|i| (lo * (last - i as f64) + hi * i as f64) / last).collect())
}

fn fit(r: &Resolved, p: &FitParams) -> Result<Value, CliError> {
    let structure = match &r.structure {
        Some(s) => s.clone(),
        None => {
            let d = p.samples.as_ref().and_then(|t| t.first()).map_or(1, |(c, _)| c.0.len());
            Structure::new(d, PredicateSpec::coordinates(d), Default::default())?
        }
    };
    let mut equilibrium = None;
    let target: Vec<(LayerState, f64)> = match (&p.samples, p.target) {
        (Some(t), _) => t.iter().map(|(c, y)| Ok((LayerState::new(c.0.clone())?, *y))).collect::<Result<_, CliError>>()?,
        (None, FitTarget::Equilibrium) => {
            let f = r.function()?;
            if structure.dimension != 1 {
                return Err(CliError::Usage("grid targets are one-dimensional; give `samples` instead".into()));
            }
            let pred = predicate(&structure, &p.predicate)?;
            let xs = grid_1d(&p.domain, p.points)?;
            let vs = xs.into_iter().map(LayerState::scalar).collect::<crate::Result<Vec<_>>>()?;
            let eq = iterate_until_equilibrium_with(f, &vs, &structure.predicates, &p.convergence.options())?;
            equilibrium = Some(json!({ "n": eq.n, "residual": eq.residual, "status": eq.status }));
            if !eq.converged() {
                return Ok(json!({ "equilibrium": equilibrium, "fit": null }));
            }
            eq.table.entries.iter().map(|e| (e.input.clone(), pred.eval(&e.output))).collect()
        }
        (None, t) => {
            let g: fn(f64) -> f64 = match t {
                FitTarget::Abs => f64::abs,
                FitTarget::Square => |x| x * x,
                FitTarget::Step => |x| if x >= 0.5 { 1.0 } else { 0.0 },
                FitTarget::Sqrt => f64::sqrt,
                FitTarget::Equilibrium => unreachable!("handled above"),
            };
            let xs = grid_1d(&p.domain, p.points)?;
            if t == FitTarget::Sqrt && xs[0] < 0.0 {
                return Err(CliError::Usage("`sqrt` needs a nonnegative domain".into()));
            }
            xs.into_iter().map(|x| Ok((LayerState::scalar(x)?, g(x)))).collect::<Result<_, CliError>>()?
        }
    };
    let atomics: Vec<ExplicitPredicate> =
        structure.predicates.iter().map(|q| ExplicitPredicate::predicate(q.label.clone())).collect();
    let catalog = Catalog::new(structure.predicates.clone());
    let result = fit_uniform_approximation(&target, &atomics, &catalog, p.epsilon, p.budget)?;
    let verified = result.verify(&target, &catalog)?;
    Ok(json!({ "equilibrium": equilibrium, "fit": result, "verified": verified }))
}

fn subsequence(r: &Resolved, p: &SubsequenceParams) -> Result<Value, CliError> {
    let (f, s) = (r.function()?, r.structure()?);
    let v = states(&p.states)?;
    let f_star = LimitMap { f, preds: &s.predicates, options: p.convergence.options() };
    let cert = sequential_subsequence(f, &f_star, &v, &s.predicates, p.levels, p.search_budget)?;
    let verified = cert.verify(f, &f_star, &s.predicates)?;
    Ok(json!({ "certificate": cert, "complete": cert.complete(), "verified": verified }))
}

fn equicontinuity(r: &Resolved, p: &EquicontinuityParams) -> Result<Value, CliError> {
    let (f, s) = (r.function()?, r.structure()?);
    let opts = EquicontinuityOptions {
        schedule: p.schedule.clone(),
        pair_samples: p.pairs,
        seed: r.seed,
        pair_radius: p.pair_radius,
        growth_threshold: p.growth_threshold,
    };
    let est = equicontinuity_estimate(f, &s.disk, &s.predicates, s.dimension, s.region.as_ref(), &opts)?;
    Ok(json(&est))
}
