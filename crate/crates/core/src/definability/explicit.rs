//! Explicit predicates: finite expressions over atomic predicates `P ∘ g`
//! and constants, closed under `+`, scalar multiples, `max` and `min`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::LayerFunctionSpec;
use crate::structure::{Disk, LayerState, PredicateSpec};

/// Expression tree. Every node is continuous in the state, so the whole
/// expression is too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplicitPredicate {
    Constant { value: f64 },
    /// `v -> P(g(v))` for catalog predicate `P` and catalog function `g`.
    Atomic { predicate: String, function: String },
    Add { args: Vec<ExplicitPredicate> },
    ScalarMul { scalar: f64, arg: Box<ExplicitPredicate> },
    Max { args: Vec<ExplicitPredicate> },
    Min { args: Vec<ExplicitPredicate> },
}

impl ExplicitPredicate {
    pub fn constant(value: f64) -> Self {
        ExplicitPredicate::Constant { value }
    }

    pub fn atomic(predicate: impl Into<String>, function: impl Into<String>) -> Self {
        ExplicitPredicate::Atomic { predicate: predicate.into(), function: function.into() }
    }

    /// `P ∘ id`
    pub fn predicate(label: impl Into<String>) -> Self {
        ExplicitPredicate::atomic(label, Catalog::IDENTITY)
    }

    pub fn add(args: Vec<ExplicitPredicate>) -> Self {
        ExplicitPredicate::Add { args }
    }

    pub fn scale(scalar: f64, arg: ExplicitPredicate) -> Self {
        ExplicitPredicate::ScalarMul { scalar, arg: Box::new(arg) }
    }

    pub fn max(args: Vec<ExplicitPredicate>) -> Self {
        ExplicitPredicate::Max { args }
    }

    pub fn min(args: Vec<ExplicitPredicate>) -> Self {
        ExplicitPredicate::Min { args }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            ExplicitPredicate::Constant { .. } | ExplicitPredicate::Atomic { .. } => 1,
            ExplicitPredicate::ScalarMul { arg, .. } => 1 + arg.size(),
            ExplicitPredicate::Add { args } | ExplicitPredicate::Max { args } | ExplicitPredicate::Min { args } => {
                1 + args.iter().map(ExplicitPredicate::size).sum::<usize>()
            }
        }
    }

    fn children(&self) -> &[ExplicitPredicate] {
        match self {
            ExplicitPredicate::Add { args } | ExplicitPredicate::Max { args } | ExplicitPredicate::Min { args } => args,
            ExplicitPredicate::ScalarMul { arg, .. } => std::slice::from_ref(arg),
            _ => &[],
        }
    }
}

/// Predicates and named functions that atomic leaves may reference. The
/// identity is always present as `id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub predicates: Vec<PredicateSpec>,
    pub functions: BTreeMap<String, LayerFunctionSpec>,
}

impl Catalog {
    pub const IDENTITY: &'static str = "id";

    pub fn new(predicates: Vec<PredicateSpec>) -> Self {
        let mut functions = BTreeMap::new();
        functions.insert(Catalog::IDENTITY.to_string(), LayerFunctionSpec::Identity);
        Catalog { predicates, functions }
    }

    pub fn with_function(mut self, name: impl Into<String>, f: LayerFunctionSpec) -> Self {
        self.functions.insert(name.into(), f);
        self
    }

    pub fn predicate(&self, label: &str) -> Result<&PredicateSpec> {
        self.predicates
            .iter()
            .find(|p| p.label == label)
            .ok_or_else(|| Error::UnknownPredicate(label.to_string()))
    }

    pub fn function(&self, name: &str) -> Result<&LayerFunctionSpec> {
        self.functions.get(name).ok_or_else(|| Error::UnknownFunction(name.to_string()))
    }

    /// Checks catalog references, finiteness of scalars and arity of n-ary nodes.
    pub fn validate(&self, expr: &ExplicitPredicate) -> Result<()> {
        match expr {
            ExplicitPredicate::Constant { value } | ExplicitPredicate::ScalarMul { scalar: value, .. }
                if !value.is_finite() =>
            {
                return Err(Error::InvalidArgument("explicit predicate scalars must be finite".into()))
            }
            ExplicitPredicate::Atomic { predicate, function } => {
                self.predicate(predicate)?;
                self.function(function)?;
            }
            ExplicitPredicate::Add { args } | ExplicitPredicate::Max { args } | ExplicitPredicate::Min { args }
                if args.is_empty() =>
            {
                return Err(Error::InvalidArgument("connectives need at least one argument".into()))
            }
            _ => {}
        }
        expr.children().iter().try_for_each(|c| self.validate(c))
    }
}

/// Evaluates the expression at `v`.
pub fn eval_explicit(expr: &ExplicitPredicate, v: &LayerState, catalog: &Catalog) -> Result<f64> {
    let fold = |args: &[ExplicitPredicate], init: f64, op: fn(f64, f64) -> f64| -> Result<f64> {
        if args.is_empty() {
            return Err(Error::InvalidArgument("connectives need at least one argument".into()));
        }
        args.iter().try_fold(init, |acc, a| Ok(op(acc, eval_explicit(a, v, catalog)?)))
    };
    match expr {
        ExplicitPredicate::Constant { value } => Ok(*value),
        ExplicitPredicate::Atomic { predicate, function } => {
            let p = catalog.predicate(predicate)?;
            let w = catalog.function(function)?.eval(v)?;
            p.eval_checked(&w)
        }
        ExplicitPredicate::Add { args } => fold(args, 0.0, |a, b| a + b),
        ExplicitPredicate::ScalarMul { scalar, arg } => Ok(scalar * eval_explicit(arg, v, catalog)?),
        ExplicitPredicate::Max { args } => fold(args, f64::NEG_INFINITY, f64::max),
        ExplicitPredicate::Min { args } => fold(args, f64::INFINITY, f64::min),
    }
}

/// A bound `r` with `|expr(v)| <= r` on the disk, provided every catalog
/// function used maps the disk into itself.
pub fn bound_explicit(expr: &ExplicitPredicate, disk: &Disk) -> Result<f64> {
    match expr {
        ExplicitPredicate::Constant { value } => Ok(value.abs()),
        ExplicitPredicate::Atomic { predicate, .. } => disk
            .bound(predicate)
            .ok_or_else(|| Error::InvalidDisk(format!("predicate `{predicate}` is unbounded on the disk"))),
        ExplicitPredicate::Add { args } => args.iter().map(|a| bound_explicit(a, disk)).sum(),
        ExplicitPredicate::ScalarMul { scalar, arg } => Ok(scalar.abs() * bound_explicit(arg, disk)?),
        ExplicitPredicate::Max { args } | ExplicitPredicate::Min { args } => {
            args.iter().try_fold(0.0, |acc: f64, a| Ok(acc.max(bound_explicit(a, disk)?)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use crate::structure::SampleBox;
    use proptest::prelude::*;

    type E = ExplicitPredicate;

    fn cat() -> Catalog {
        Catalog::new(PredicateSpec::coordinates(1)).with_function("logistic", LayerFunctionSpec::Logistic)
    }

    fn at(e: &E, x: f64) -> f64 {
        eval_explicit(e, &LayerState::scalar(x).unwrap(), &cat()).unwrap()
    }

    fn abs_expr() -> E {
        E::max(vec![E::predicate("P0"), E::scale(-1.0, E::predicate("P0"))])
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(at(&abs_expr(), -0.3), 0.3);
        assert_eq!(at(&E::constant(2.5), 0.7), 2.5);
        assert_eq!(at(&E::add(vec![E::predicate("P0"), E::constant(1.0)]), 0.2), 1.2);
        // 4 * 0.5 * 0.5
        assert_eq!(at(&E::atomic("P0", "logistic"), 0.5), 1.0);
    }

    #[test]
    fn unknown_references() {
        let c = cat();
        let v = LayerState::scalar(0.1).unwrap();
        assert_eq!(eval_explicit(&E::predicate("Q"), &v, &c), Err(Error::UnknownPredicate("Q".into())));
        assert_eq!(eval_explicit(&E::atomic("P0", "tanh"), &v, &c), Err(Error::UnknownFunction("tanh".into())));
        assert!(c.validate(&E::max(vec![])).is_err());
        assert!(c.validate(&E::add(vec![E::predicate("Q")])).is_err());
        assert!(c.validate(&abs_expr()).is_ok());
    }

    #[test]
    fn bound_examples() {
        let disk = Disk::new([("P0", 1.0)]);
        let a = || E::predicate("P0");
        assert_eq!(bound_explicit(&a(), &disk).unwrap(), 1.0);
        assert_eq!(bound_explicit(&E::add(vec![a(), a()]), &disk).unwrap(), 2.0);
        let e = E::scale(-3.0, E::max(vec![a(), E::constant(0.5)]));
        assert_eq!(bound_explicit(&e, &disk).unwrap(), 3.0);
        assert!(bound_explicit(&E::predicate("P1"), &disk).is_err());
    }

    #[test]
    fn json_shape() {
        let json = serde_json::to_value(abs_expr()).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"op": "max", "args": [
                {"op": "atomic", "predicate": "P0", "function": "id"},
                {"op": "scalar_mul", "scalar": -1.0, "arg": {"op": "atomic", "predicate": "P0", "function": "id"}}
            ]})
        );
        let back: E = serde_json::from_value(json).unwrap();
        assert_eq!(back, abs_expr());
        assert!(serde_json::from_str::<E>(r#"{"op":"constant","value":1,"extra":0}"#).is_err());
    }

    fn leaf() -> impl Strategy<Value = E> {
        prop_oneof![
            (-3.0f64..3.0).prop_map(E::constant),
            Just(E::predicate("P0")),
            Just(E::atomic("P0", "logistic")),
        ]
    }

    fn expr() -> impl Strategy<Value = E> {
        leaf().prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(E::add),
                prop::collection::vec(inner.clone(), 1..4).prop_map(E::max),
                prop::collection::vec(inner.clone(), 1..4).prop_map(E::min),
                ((-4.0f64..4.0), inner).prop_map(|(s, e)| E::scale(s, e)),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // the logistic map keeps [0, 1] inside the disk |P0| <= 1
        #[test]
        fn bounds_are_sound(e in expr(), seed in any::<u64>()) {
            let disk = Disk::new([("P0", 1.0)]);
            let r = bound_explicit(&e, &disk).unwrap();
            let b = SampleBox::cube(1, 0.0, 1.0).unwrap();
            let mut rng = sampling::rng(seed);
            for _ in 0..10_000 / 64 {
                let v = sampling::uniform_in(&b, &mut rng);
                prop_assert!(eval_explicit(&e, &v, &cat()).unwrap().abs() <= r * (1.0 + 1e-12));
            }
        }

        #[test]
        fn lattice_laws(a in expr(), b in expr(), c in expr(), x in 0.0f64..1.0) {
            let ev = |e: &E| at(e, x);
            prop_assert_eq!(ev(&E::max(vec![a.clone(), b.clone()])), ev(&E::max(vec![b.clone(), a.clone()])));
            prop_assert_eq!(ev(&E::min(vec![a.clone(), b.clone()])), ev(&E::min(vec![b.clone(), a.clone()])));
            prop_assert_eq!(
                ev(&E::max(vec![E::max(vec![a.clone(), b.clone()]), c.clone()])),
                ev(&E::max(vec![a.clone(), E::max(vec![b.clone(), c.clone()])]))
            );
            prop_assert_eq!(
                ev(&E::min(vec![E::min(vec![a.clone(), b.clone()]), c.clone()])),
                ev(&E::min(vec![a.clone(), E::min(vec![b.clone(), c])]))
            );
            prop_assert_eq!(ev(&E::max(vec![a.clone(), a.clone()])), ev(&a));
            prop_assert_eq!(ev(&E::min(vec![a.clone(), a.clone()])), ev(&a));
            prop_assert_eq!(
                ev(&E::scale(-1.0, E::max(vec![a.clone(), b.clone()]))),
                ev(&E::min(vec![E::scale(-1.0, a), E::scale(-1.0, b)]))
            );
        }
    }

    #[test]
    fn add_does_not_distribute_over_max_or_min() {
        let p = E::predicate("P0");
        let neg = E::scale(-1.0, p.clone());
        let zero = E::constant(0.0);
        // max(x, 0) + max(-x, 0) = |x| but max(x + (-x), 0) = 0
        let sum_of_max = E::add(vec![E::max(vec![p.clone(), zero.clone()]), E::max(vec![neg.clone(), zero.clone()])]);
        let max_of_sum = E::max(vec![E::add(vec![p.clone(), neg.clone()]), zero.clone()]);
        assert_eq!((at(&sum_of_max, 0.4), at(&max_of_sum, 0.4)), (0.4, 0.0));
        let sum_of_min = E::add(vec![E::min(vec![p.clone(), zero.clone()]), E::min(vec![neg.clone(), zero.clone()])]);
        let min_of_sum = E::min(vec![E::add(vec![p, neg]), zero]);
        assert_eq!((at(&sum_of_min, 0.4), at(&min_of_sum, 0.4)), (-0.4, 0.0));
    }
}
