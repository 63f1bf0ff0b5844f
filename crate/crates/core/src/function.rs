//! Layer functions: a closed catalog of unary state maps plus composition,
//! iteration and arity bundling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite::FiniteMap;
use crate::poly::{Polynomial, C2};
use crate::structure::{LayerState, PredicateKind, PredicateSpec};

pub const DEFAULT_CRITICAL_TOL: f64 = 1e-12;

fn default_critical_tol() -> f64 {
    DEFAULT_CRITICAL_TOL
}

/// Anything that maps states to states.
pub trait StateMap {
    fn apply(&self, v: &LayerState) -> Result<LayerState>;
}

impl<F> StateMap for F
where
    F: Fn(&LayerState) -> Result<LayerState>,
{
    fn apply(&self, v: &LayerState) -> Result<LayerState> {
        self(v)
    }
}

/// One output block of a bundled map `L^m -> L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockMap {
    /// `u -> u_block`
    Select { block: usize },
    /// `u -> sum_k weights[k] * u_k`
    Linear { weights: Vec<f64> },
    /// `u -> function(arg(u))`
    Apply {
        function: Box<LayerFunctionSpec>,
        arg: Box<BlockMap>,
    },
}

impl BlockMap {
    fn validate(&self, m: usize, width: usize) -> Result<()> {
        match self {
            BlockMap::Select { block } if *block >= m => Err(Error::InvalidFunction(format!(
                "selects block {block} of a {m}-block bundle"
            ))),
            BlockMap::Linear { weights } if weights.len() != m => Err(Error::InvalidFunction(
                format!("linear block map has {} weights for {m} blocks", weights.len()),
            )),
            BlockMap::Linear { weights } if weights.iter().any(|w| !w.is_finite()) => {
                Err(Error::InvalidFunction("non-finite block weight".into()))
            }
            BlockMap::Apply { function, arg } => {
                function.check_dim(width)?;
                arg.validate(m, width)
            }
            _ => Ok(()),
        }
    }

    fn eval(&self, u: &[f64], width: usize) -> Result<Vec<f64>> {
        match self {
            BlockMap::Select { block } => Ok(u[block * width..(block + 1) * width].to_vec()),
            BlockMap::Linear { weights } => {
                let mut out = vec![0.0; width];
                for (k, w) in weights.iter().enumerate() {
                    for (o, x) in out.iter_mut().zip(&u[k * width..(k + 1) * width]) {
                        *o += w * x;
                    }
                }
                Ok(out)
            }
            BlockMap::Apply { function, arg } => {
                let inner = LayerState::from_eval(arg.eval(u, width)?)?;
                Ok(function.eval(&inner)?.into_coords())
            }
        }
    }
}

/// The closed catalog of layer functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(remote = "Self", tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerFunctionSpec {
    Identity,
    /// `v -> 4v(1 - v)` on `d = 1`.
    Logistic,
    /// `v -> v^2` on `d = 1`.
    Square,
    /// `v -> A v + b`.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// One Newton step for a real polynomial on the plane `(re, im)`.
    NewtonStep {
        coeffs: Vec<f64>,
        #[serde(default = "default_critical_tol")]
        critical_tol: f64,
    },
    /// A self-map of `[m]` acting on one-dimensional states holding `1..=m`.
    FiniteMap { table: FiniteMap },
    /// `outer ∘ inner`
    Compose {
        inner: Box<LayerFunctionSpec>,
        outer: Box<LayerFunctionSpec>,
    },
    /// `base^n`
    Iterate { base: Box<LayerFunctionSpec>, n: u64 },
    /// `m` block maps over blocks of `block_dim` coordinates.
    Bundle { block_dim: usize, components: Vec<BlockMap> },
}

crate::strict::strict_tagged!(LayerFunctionSpec, ["identity", "logistic", "square"]);

impl LayerFunctionSpec {
    pub fn affine(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let f = LayerFunctionSpec::Affine { matrix, offset };
        f.validate()?;
        Ok(f)
    }

    /// Constant map onto `c`.
    pub fn constant(c: &LayerState) -> Self {
        let d = c.dim();
        LayerFunctionSpec::Affine { matrix: vec![vec![0.0; d]; d], offset: c.coords().to_vec() }
    }

    pub fn compose(inner: LayerFunctionSpec, outer: LayerFunctionSpec) -> Result<Self> {
        let f = LayerFunctionSpec::Compose { inner: Box::new(inner), outer: Box::new(outer) };
        f.validate()?;
        Ok(f)
    }

    /// Checks internal consistency; returns the dimension if it is fixed.
    pub fn validate(&self) -> Result<Option<usize>> {
        match self {
            LayerFunctionSpec::Identity => Ok(None),
            LayerFunctionSpec::Logistic | LayerFunctionSpec::Square => Ok(Some(1)),
            LayerFunctionSpec::FiniteMap { .. } => Ok(Some(1)),
            LayerFunctionSpec::Affine { matrix, offset } => {
                let d = offset.len();
                if d == 0 || matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
                    return Err(Error::InvalidFunction(format!(
                        "affine map needs a {d}x{d} matrix and an offset of length {d}"
                    )));
                }
                if matrix.iter().flatten().chain(offset).any(|x| !x.is_finite()) {
                    return Err(Error::InvalidFunction("non-finite affine coefficient".into()));
                }
                Ok(Some(d))
            }
            LayerFunctionSpec::NewtonStep { coeffs, critical_tol } => {
                Polynomial::new(coeffs)?;
                if !(critical_tol.is_finite() && *critical_tol >= 0.0) {
                    return Err(Error::InvalidFunction("critical_tol must be >= 0".into()));
                }
                Ok(Some(2))
            }
            LayerFunctionSpec::Compose { inner, outer } => {
                match (inner.validate()?, outer.validate()?) {
                    (Some(a), Some(b)) if a != b => Err(Error::Dimension { expected: a, found: b }),
                    (a, b) => Ok(a.or(b)),
                }
            }
            LayerFunctionSpec::Iterate { base, .. } => base.validate(),
            LayerFunctionSpec::Bundle { block_dim, components } => {
                let m = components.len();
                if m == 0 || *block_dim == 0 {
                    return Err(Error::InvalidFunction("bundle needs m >= 1 blocks of width >= 1".into()));
                }
                for c in components {
                    c.validate(m, *block_dim)?;
                }
                Ok(Some(m * block_dim))
            }
        }
    }

    /// Checks that this function acts on `d`-dimensional states.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.validate()? {
            Some(fd) if fd != d => Err(Error::Dimension { expected: fd, found: d }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, v: &LayerState) -> Result<LayerState> {
        match self {
            LayerFunctionSpec::Identity => Ok(v.clone()),
            LayerFunctionSpec::Logistic => {
                v.expect_dim(1)?;
                let x = v.coords()[0];
                LayerState::from_eval(vec![4.0 * x * (1.0 - x)])
            }
            LayerFunctionSpec::Square => {
                v.expect_dim(1)?;
                let x = v.coords()[0];
                LayerState::from_eval(vec![x * x])
            }
            LayerFunctionSpec::Affine { matrix, offset } => {
                v.expect_dim(offset.len())?;
                let out = matrix
                    .iter()
                    .zip(offset)
                    .map(|(row, b)| row.iter().zip(v.coords()).map(|(a, x)| a * x).sum::<f64>() + b)
                    .collect();
                LayerState::from_eval(out)
            }
            LayerFunctionSpec::NewtonStep { coeffs, critical_tol } => {
                v.expect_dim(2)?;
                let p = Polynomial::new(coeffs)?;
                let z = p.newton_step(C2::new(v.coords()[0], v.coords()[1]), *critical_tol)?;
                LayerState::from_eval(vec![z.re, z.im])
            }
            LayerFunctionSpec::FiniteMap { table } => {
                v.expect_dim(1)?;
                let i = finite_index(v.coords()[0], table.len())?;
                Ok(LayerState::from_eval(vec![table.apply(i) as f64])?)
            }
            LayerFunctionSpec::Compose { inner, outer } => outer.eval(&inner.eval(v)?),
            LayerFunctionSpec::Iterate { base, n } => {
                let mut x = v.clone();
                for _ in 0..*n {
                    x = base.eval(&x)?;
                }
                Ok(x)
            }
            LayerFunctionSpec::Bundle { block_dim, components } => {
                v.expect_dim(components.len() * block_dim)?;
                let mut out = Vec::with_capacity(v.dim());
                for c in components {
                    out.extend(c.eval(v.coords(), *block_dim)?);
                }
                LayerState::from_eval(out)
            }
        }
    }
}

impl StateMap for LayerFunctionSpec {
    fn apply(&self, v: &LayerState) -> Result<LayerState> {
        self.eval(v)
    }
}

fn finite_index(x: f64, m: usize) -> Result<u32> {
    if x.fract() != 0.0 || x < 1.0 || x > m as f64 {
        return Err(Error::NotAnIndex(x));
    }
    Ok(x as u32)
}

/// `f^n`. Finite maps are exponentiated eagerly so the result evaluates in O(1).
pub fn iterate(f: &LayerFunctionSpec, n: u64) -> LayerFunctionSpec {
    match f {
        _ if n == 0 => LayerFunctionSpec::Identity,
        LayerFunctionSpec::Identity => LayerFunctionSpec::Identity,
        _ if n == 1 => f.clone(),
        LayerFunctionSpec::FiniteMap { table } => {
            LayerFunctionSpec::FiniteMap { table: table.power(n as u128) }
        }
        LayerFunctionSpec::Iterate { base, n: k } => match k.checked_mul(n) {
            Some(total) => LayerFunctionSpec::Iterate { base: base.clone(), n: total },
            None => LayerFunctionSpec::Iterate { base: Box::new(f.clone()), n },
        },
        _ => LayerFunctionSpec::Iterate { base: Box::new(f.clone()), n },
    }
}

/// Bundles `m` block maps `L^m -> L` into one unary map on `L^m`, and lifts
/// the base predicates to the disjoint union of `m` copies where copy `k`
/// reads block `k`. With `m = 1` the predicates are returned unchanged.
pub fn bundle_arity(
    components: Vec<BlockMap>,
    block_dim: usize,
    base_preds: &[PredicateSpec],
) -> Result<(LayerFunctionSpec, Vec<PredicateSpec>)> {
    crate::structure::validate_predicates(base_preds, block_dim)?;
    let m = components.len();
    let f = LayerFunctionSpec::Bundle { block_dim, components };
    f.validate()?;
    if m == 1 {
        return Ok((f, base_preds.to_vec()));
    }
    let lifted = (0..m)
        .flat_map(|k| {
            base_preds.iter().map(move |p| {
                PredicateSpec::new(
                    format!("{}@{k}", p.label),
                    PredicateKind::Block { block: k, width: block_dim, inner: Box::new(p.kind.clone()) },
                )
            })
        })
        .collect();
    Ok((f, lifted))
}

/// `(u0, u1) -> (u1, (u0 + u1) / 2)` on pairs of one-dimensional states.
pub fn averaging_map() -> LayerFunctionSpec {
    LayerFunctionSpec::Bundle {
        block_dim: 1,
        components: vec![BlockMap::Select { block: 1 }, BlockMap::Linear { weights: vec![0.5, 0.5] }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(c: &[f64]) -> LayerState {
        LayerState::new(c.to_vec()).unwrap()
    }

    #[test]
    fn iterate_finite_map_eagerly() {
        let f = LayerFunctionSpec::FiniteMap { table: FiniteMap::new(vec![2, 3, 2, 1]).unwrap() };
        assert_eq!(
            iterate(&f, 2),
            LayerFunctionSpec::FiniteMap { table: FiniteMap::new(vec![3, 2, 3, 2]).unwrap() }
        );
        assert_eq!(iterate(&f, 0).eval(&s(&[1.0])).unwrap(), s(&[1.0]));
    }

    #[test]
    fn iterate_square_closed_form() {
        let v = iterate(&LayerFunctionSpec::Square, 3).eval(&s(&[0.9])).unwrap();
        assert!((v.coords()[0] - 0.43046721).abs() < 1e-15);
    }

    #[test]
    fn iterate_of_iterate_multiplies() {
        let g = iterate(&iterate(&LayerFunctionSpec::Square, 2), 3);
        assert_eq!(g, LayerFunctionSpec::Iterate { base: Box::new(LayerFunctionSpec::Square), n: 6 });
    }

    #[test]
    fn finite_map_rejects_non_index_states() {
        let f = LayerFunctionSpec::FiniteMap { table: FiniteMap::identity(3) };
        assert!(matches!(f.eval(&s(&[1.5])), Err(Error::NotAnIndex(_))));
        assert!(matches!(f.eval(&s(&[4.0])), Err(Error::NotAnIndex(_))));
    }

    #[test]
    fn dimension_checks() {
        assert!(LayerFunctionSpec::Logistic.eval(&s(&[0.1, 0.2])).is_err());
        let bad = LayerFunctionSpec::Compose {
            inner: Box::new(LayerFunctionSpec::Square),
            outer: Box::new(averaging_map()),
        };
        assert!(bad.validate().is_err());
        assert!(LayerFunctionSpec::affine(vec![vec![1.0, 0.0]], vec![0.0]).is_err());
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(matches!(LayerFunctionSpec::Square.eval(&s(&[1e200])), Err(Error::Overflow)));
    }

    #[test]
    fn newton_step_examples() {
        let f = LayerFunctionSpec::NewtonStep { coeffs: vec![1.0, 0.0, -1.0], critical_tol: 1e-12 };
        assert_eq!(f.eval(&s(&[2.0, 0.0])).unwrap(), s(&[1.25, 0.0]));
        assert_eq!(f.eval(&s(&[1.0, 0.0])).unwrap(), s(&[1.0, 0.0]));
        assert!(matches!(f.eval(&s(&[0.0, 0.0])), Err(Error::CriticalPoint { .. })));
    }

    #[test]
    fn bundle_examples() {
        let (f, preds) =
            bundle_arity(
                vec![BlockMap::Select { block: 1 }, BlockMap::Linear { weights: vec![0.5, 0.5] }],
                1,
                &[PredicateSpec::coordinate("P0", 0)],
            )
            .unwrap();
        assert_eq!(f.eval(&s(&[0.0, 0.9])).unwrap(), s(&[0.9, 0.45]));
        assert_eq!(preds.len(), 2);
        assert_eq!(preds[1].label, "P0@1");
        assert_eq!(preds[1].eval(&s(&[0.9, 0.45])), 0.45);
    }

    #[test]
    fn bundle_of_one_is_the_map_itself() {
        let base = [PredicateSpec::coordinate("P0", 0)];
        let g = BlockMap::Apply {
            function: Box::new(LayerFunctionSpec::Logistic),
            arg: Box::new(BlockMap::Select { block: 0 }),
        };
        let (f, preds) = bundle_arity(vec![g], 1, &base).unwrap();
        assert_eq!(preds, base.to_vec());
        for x in [0.0, 0.2, 0.37, 1.0] {
            assert_eq!(f.eval(&s(&[x])).unwrap(), LayerFunctionSpec::Logistic.eval(&s(&[x])).unwrap());
        }
    }

    #[test]
    fn bundle_arity_mismatch() {
        let err = bundle_arity(vec![BlockMap::Select { block: 2 }, BlockMap::Select { block: 0 }], 1, &[]);
        assert!(err.is_err());
        let err = bundle_arity(vec![BlockMap::Linear { weights: vec![1.0] }, BlockMap::Select { block: 0 }], 1, &[]);
        assert!(err.is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let f = LayerFunctionSpec::compose(
            LayerFunctionSpec::affine(vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-7, 0.7]], vec![0.2, -0.3]).unwrap(),
            averaging_map(),
        )
        .unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let back: LayerFunctionSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        let v = s(&[0.123456789, -0.987654321]);
        assert_eq!(back.eval(&v).unwrap().coords(), f.eval(&v).unwrap().coords());
    }

    #[test]
    fn unknown_function_fields_rejected() {
        assert!(serde_json::from_str::<LayerFunctionSpec>(r#"{"type":"square","x":1}"#).is_err());
        assert!(serde_json::from_str::<LayerFunctionSpec>(r#"{"type":"cube"}"#).is_err());
    }

    proptest! {
        #[test]
        fn semigroup_law(x in 0.0f64..1.0, n in 0u64..20, m in 0u64..20) {
            let f = LayerFunctionSpec::Logistic;
            let v = s(&[x]);
            let lhs = iterate(&f, n + m).eval(&v).unwrap();
            let mid = iterate(&f, n).eval(&v).unwrap();
            let rhs = iterate(&f, m).eval(&mid).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn bundle_blocks_match_components(u0 in -5.0f64..5.0, u1 in -5.0f64..5.0) {
            let comps = vec![
                BlockMap::Select { block: 1 },
                BlockMap::Linear { weights: vec![0.5, 0.5, -1.0] },
                BlockMap::Apply { function: Box::new(LayerFunctionSpec::Square), arg: Box::new(BlockMap::Select { block: 0 }) },
            ];
            let (f, _) = bundle_arity(comps.clone(), 1, &[]).unwrap();
            let u = s(&[u0, u1, 0.0]);
            let out = f.eval(&u).unwrap();
            for (k, c) in comps.iter().enumerate() {
                prop_assert_eq!(out.coords()[k], c.eval(u.coords(), 1).unwrap()[0]);
            }
        }
    }
}
