//! Whether a deep equilibrium is computable: explicit predicates, uniform
//! approximation, the limit-exchange test and the continuity probe.

mod exchange;
mod explicit;
mod fit;
mod probe;

pub use exchange::{
    detect_limit, limit_exchange_test, Caps, DetectedLimit, GeometricRule, LimitExchangeReport, MIN_CAP,
    STABLE_CHECKS,
};
pub use explicit::{bound_explicit, eval_explicit, Catalog, ExplicitPredicate};
pub use fit::{
    fit_uniform_approximation, sup_error, FitAttempt, FitFamily, FitResult, FitStatus, DEFAULT_NODE_BUDGET,
    INITIAL_SEGMENTS,
};
pub use probe::{
    continuity_probe, ContinuityReport, ContinuityVerdict, PredicateStats, Probe, ProbeOptions, Statistic,
};
