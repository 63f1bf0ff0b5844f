//! States, predicates and disks of a computation-states structure.
//!
//! A structure is a state space `R^d` together with a finite list of
//! real-valued predicates. States are only ever distinguished through their
//! predicate values, so every notion of distance here is a pseudometric built
//! from predicate differences.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the layer state space: a fixed-length vector of finite reals.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LayerState(Vec<f64>);

impl LayerState {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Dimension { expected: 1, found: 0 });
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(Error::NonFiniteState { index, value });
        }
        Ok(LayerState(coords))
    }

    /// A one-dimensional state.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    /// Builds a state from evaluation output; non-finite values are overflow.
    pub(crate) fn from_eval(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Overflow);
        }
        Ok(LayerState(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Supremum of coordinate differences.
    pub fn sup_distance(&self, other: &LayerState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn expect_dim(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(Error::Dimension { expected: d, found: self.dim() });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for LayerState {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        LayerState::new(coords)
    }
}

impl From<LayerState> for Vec<f64> {
    fn from(state: LayerState) -> Self {
        state.0
    }
}

impl fmt::Debug for LayerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

/// The closed catalog of predicate kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(remote = "Self", tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateKind {
    /// `v -> v[index]`
    Coordinate { index: usize },
    /// `v -> (sum |v_i|^q)^(1/q)`, `q >= 1`
    QNorm { q: f64 },
    /// `v -> max |v_i|`
    SupNorm,
    /// `v -> tanh(v[index])`, a bounded coordinate.
    TanhCoordinate { index: usize },
    /// A base predicate read on block `block` of a bundled state whose blocks
    /// have `width` coordinates each.
    Block {
        block: usize,
        width: usize,
        inner: Box<PredicateKind>,
    },
}

crate::strict::strict_tagged!(PredicateKind, ["sup_norm"]);

impl PredicateKind {
    fn validate(&self, d: usize) -> std::result::Result<(), String> {
        match self {
            PredicateKind::Coordinate { index } | PredicateKind::TanhCoordinate { index } => {
                if *index >= d {
                    return Err(format!("index {index} out of range for dimension {d}"));
                }
            }
            PredicateKind::QNorm { q } => {
                if !(q.is_finite() && *q >= 1.0) {
                    return Err(format!("q-norm needs q >= 1, got {q}"));
                }
            }
            PredicateKind::SupNorm => {}
            PredicateKind::Block { block, width, inner } => {
                if *width == 0 || (block + 1) * width > d {
                    return Err(format!(
                        "block {block} of width {width} does not fit dimension {d}"
                    ));
                }
                inner.validate(*width)?;
            }
        }
        Ok(())
    }

    fn eval(&self, v: &[f64]) -> f64 {
        match self {
            PredicateKind::Coordinate { index } => v[*index],
            PredicateKind::TanhCoordinate { index } => v[*index].tanh(),
            PredicateKind::SupNorm => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
            PredicateKind::QNorm { q } => {
                if *q == 2.0 {
                    v.iter().map(|x| x * x).sum::<f64>().sqrt()
                } else if *q == 1.0 {
                    v.iter().map(|x| x.abs()).sum()
                } else {
                    v.iter().map(|x| x.abs().powf(*q)).sum::<f64>().powf(1.0 / q)
                }
            }
            PredicateKind::Block { block, width, inner } => {
                inner.eval(&v[block * width..(block + 1) * width])
            }
        }
    }

    /// Interval of coordinate `i` implied by `|P(v)| <= r`, if this predicate
    /// constrains it on its own.
    fn coordinate_bound(&self, i: usize, r: f64) -> Option<(f64, f64)> {
        match self {
            PredicateKind::Coordinate { index } if *index == i => Some((-r, r)),
            PredicateKind::TanhCoordinate { index } if *index == i && r < 1.0 => {
                let a = r.atanh();
                Some((-a, a))
            }
            PredicateKind::QNorm { .. } | PredicateKind::SupNorm => Some((-r, r)),
            PredicateKind::Block { block, width, inner } => {
                if i >= block * width && i < (block + 1) * width {
                    inner.coordinate_bound(i - block * width, r)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

/// A labelled predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateSpec {
    pub label: String,
    pub kind: PredicateKind,
}

impl PredicateSpec {
    pub fn new(label: impl Into<String>, kind: PredicateKind) -> Self {
        PredicateSpec { label: label.into(), kind }
    }

    pub fn coordinate(label: impl Into<String>, index: usize) -> Self {
        Self::new(label, PredicateKind::Coordinate { index })
    }

    /// `P0, P1, ...` reading each coordinate of a `d`-dimensional state.
    pub fn coordinates(d: usize) -> Vec<PredicateSpec> {
        (0..d).map(|i| Self::coordinate(format!("P{i}"), i)).collect()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.kind.validate(d).map_err(|reason| Error::InvalidPredicate {
            label: self.label.clone(),
            reason,
        })
    }

    /// `P(v)`. The caller guarantees `v` has a dimension this predicate accepts.
    pub fn eval(&self, v: &LayerState) -> f64 {
        self.kind.eval(v.coords())
    }

    /// `P(v)` with a dimension check.
    pub fn eval_checked(&self, v: &LayerState) -> Result<f64> {
        self.validate(v.dim())?;
        Ok(self.eval(v))
    }
}

/// Checks every predicate against dimension `d` and that labels are unique.
pub fn validate_predicates(preds: &[PredicateSpec], d: usize) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for p in preds {
        p.validate(d)?;
        if !seen.insert(p.label.as_str()) {
            return Err(Error::InvalidPredicate {
                label: p.label.clone(),
                reason: "duplicate label".into(),
            });
        }
    }
    Ok(())
}

/// Predicate values of a state, keyed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeVector {
    pub entries: BTreeMap<String, f64>,
}

impl TypeVector {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.get(label).copied()
    }
}

/// The vector of predicate values of `v`.
pub fn predicate_type(v: &LayerState, preds: &[PredicateSpec]) -> Result<TypeVector> {
    let mut entries = BTreeMap::new();
    for p in preds {
        entries.insert(p.label.clone(), p.eval_checked(v)?);
    }
    Ok(TypeVector { entries })
}

/// `d_P(v, w) = |P(v) - P(w)|`.
pub fn pseudometric(p: &PredicateSpec, v: &LayerState, w: &LayerState) -> Result<f64> {
    if v.dim() != w.dim() {
        return Err(Error::Dimension { expected: v.dim(), found: w.dim() });
    }
    Ok((p.eval_checked(v)? - p.eval_checked(w)?).abs())
}

/// Maximum of `d_P(v, w)` over the listed predicates.
pub fn sup_pseudometric(preds: &[PredicateSpec], v: &LayerState, w: &LayerState) -> f64 {
    preds
        .iter()
        .map(|p| (p.eval(v) - p.eval(w)).abs())
        .fold(0.0, f64::max)
}

/// A generalized closed disk: bounds `r_P >= 0` on `|P(v)|` for some predicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Disk {
    pub bounds: BTreeMap<String, f64>,
}

impl Disk {
    pub fn new<I, S>(bounds: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Disk { bounds: bounds.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    pub fn bound(&self, label: &str) -> Option<f64> {
        self.bounds.get(label).copied()
    }

    pub fn validate(&self, preds: &[PredicateSpec]) -> Result<()> {
        for (label, &r) in &self.bounds {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidDisk(format!("bound for `{label}` must be >= 0, got {r}")));
            }
            if !preds.iter().any(|p| &p.label == label) {
                return Err(Error::UnknownPredicate(label.clone()));
            }
        }
        Ok(())
    }

    /// Each bound scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Disk {
        Disk { bounds: self.bounds.iter().map(|(k, r)| (k.clone(), r * factor)).collect() }
    }

    /// The first bounded predicate violated by `v`, with its value.
    pub fn violation<'a>(
        &self,
        v: &LayerState,
        preds: &'a [PredicateSpec],
    ) -> Option<(&'a PredicateSpec, f64)> {
        preds.iter().find_map(|p| {
            let r = self.bound(&p.label)?;
            let value = p.eval(v);
            (value.abs() > r).then_some((p, value))
        })
    }
}

/// `true` iff `|P(v)| <= r_P` for every bounded predicate.
pub fn in_disk(v: &LayerState, disk: &Disk, preds: &[PredicateSpec]) -> Result<bool> {
    disk.validate(preds)?;
    for p in preds {
        if disk.bound(&p.label).is_some() {
            p.validate(v.dim())?;
        }
    }
    Ok(disk.violation(v, preds).is_none())
}

/// An axis-aligned box used to draw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = SampleBox { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// `[lo, hi]^d`
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::InvalidArgument("sample box bounds must have equal nonzero length".into()));
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::InvalidArgument(format!("bad sample box interval [{a}, {b}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &LayerState) -> bool {
        v.dim() == self.dim()
            && v.coords().iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }

    pub fn intersect(&self, other: &SampleBox) -> Result<SampleBox> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: other.dim() });
        }
        SampleBox::new(
            self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect(),
            self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect(),
        )
    }

    /// Sup-norm ball of radius `radius` around `center`.
    pub fn around(center: &LayerState, radius: f64) -> Result<SampleBox> {
        SampleBox::new(
            center.coords().iter().map(|c| c - radius).collect(),
            center.coords().iter().map(|c| c + radius).collect(),
        )
    }

    /// Smallest box implied by the disk bounds, intersected with `region` when given.
    pub fn enclosing(
        disk: &Disk,
        preds: &[PredicateSpec],
        d: usize,
        region: Option<&SampleBox>,
    ) -> Result<SampleBox> {
        let mut lo = vec![f64::NEG_INFINITY; d];
        let mut hi = vec![f64::INFINITY; d];
        for p in preds {
            let Some(r) = disk.bound(&p.label) else { continue };
            for i in 0..d {
                if let Some((a, b)) = p.kind.coordinate_bound(i, r) {
                    lo[i] = lo[i].max(a);
                    hi[i] = hi[i].min(b);
                }
            }
        }
        if let Some(region) = region {
            if region.dim() != d {
                return Err(Error::Dimension { expected: d, found: region.dim() });
            }
            for i in 0..d {
                lo[i] = lo[i].max(region.lo[i]);
                hi[i] = hi[i].min(region.hi[i]);
            }
        }
        if let Some(i) = (0..d).find(|&i| !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidDisk(format!(
                "coordinate {i} is unbounded; supply a sampling region"
            )));
        }
        SampleBox::new(lo, hi)
    }
}

/// A structure: dimension, predicates, a declared disk and an optional
/// sampling region inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Structure {
    pub dimension: usize,
    pub predicates: Vec<PredicateSpec>,
    #[serde(default)]
    pub disk: Disk,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<SampleBox>,
}

impl Structure {
    pub fn new(dimension: usize, predicates: Vec<PredicateSpec>, disk: Disk) -> Result<Self> {
        let s = Structure { dimension, predicates, disk, region: None };
        s.validate()?;
        Ok(s)
    }

    pub fn with_region(mut self, region: SampleBox) -> Result<Self> {
        self.region = Some(region);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Dimension { expected: 1, found: 0 });
        }
        validate_predicates(&self.predicates, self.dimension)?;
        self.disk.validate(&self.predicates)?;
        if let Some(region) = &self.region {
            region.validate()?;
            if region.dim() != self.dimension {
                return Err(Error::Dimension { expected: self.dimension, found: region.dim() });
            }
        }
        Ok(())
    }

    pub fn predicate(&self, label: &str) -> Result<&PredicateSpec> {
        self.predicates
            .iter()
            .find(|p| p.label == label)
            .ok_or_else(|| Error::UnknownPredicate(label.to_string()))
    }

    pub fn contains(&self, v: &LayerState) -> bool {
        v.dim() == self.dimension
            && self.disk.violation(v, &self.predicates).is_none()
            && self.region.as_ref().is_none_or(|r| r.contains(v))
    }

    /// Box from which states of this structure are sampled.
    pub fn sampling_box(&self) -> Result<SampleBox> {
        SampleBox::enclosing(&self.disk, &self.predicates, self.dimension, self.region.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(c: &[f64]) -> LayerState {
        LayerState::new(c.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_finite_states() {
        assert!(matches!(
            LayerState::new(vec![0.0, f64::NAN]),
            Err(Error::NonFiniteState { index: 1, .. })
        ));
        assert!(LayerState::new(vec![]).is_err());
        assert!(serde_json::from_str::<LayerState>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn predicate_type_examples() {
        let t = predicate_type(&st(&[0.2]), &[PredicateSpec::coordinate("P0", 0)]).unwrap();
        assert_eq!(t.get("P0"), Some(0.2));
        let q2 = PredicateSpec::new("q2", PredicateKind::QNorm { q: 2.0 });
        assert_eq!(predicate_type(&st(&[3.0, 4.0]), &[q2]).unwrap().get("q2"), Some(5.0));
        let sup = PredicateSpec::new("sup", PredicateKind::SupNorm);
        assert_eq!(predicate_type(&st(&[3.0, 4.0]), &[sup]).unwrap().get("sup"), Some(4.0));
    }

    #[test]
    fn predicate_type_dimension_mismatch() {
        let err = predicate_type(&st(&[1.0]), &[PredicateSpec::coordinate("P1", 1)]).unwrap_err();
        assert!(matches!(err, Error::InvalidPredicate { .. }));
    }

    #[test]
    fn q_norm_general_and_tanh() {
        let p3 = PredicateSpec::new("q3", PredicateKind::QNorm { q: 3.0 });
        let v = st(&[1.0, -2.0]);
        assert!((p3.eval(&v) - 9f64.powf(1.0 / 3.0)).abs() < 1e-12);
        let t = PredicateSpec::new("t", PredicateKind::TanhCoordinate { index: 1 });
        assert!((t.eval(&v) - (-2f64).tanh()).abs() < 1e-15);
        assert!(PredicateSpec::new("bad", PredicateKind::QNorm { q: 0.5 }).validate(2).is_err());
    }

    #[test]
    fn pseudometric_examples() {
        let p0 = PredicateSpec::coordinate("P0", 0);
        assert!((pseudometric(&p0, &st(&[0.2]), &st(&[0.5])).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(pseudometric(&p0, &st(&[0.7]), &st(&[0.7])).unwrap(), 0.0);
        let sup = PredicateSpec::new("sup", PredicateKind::SupNorm);
        assert_eq!(pseudometric(&sup, &st(&[1.0, 0.0]), &st(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(pseudometric(&p0, &st(&[1.0]), &st(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn in_disk_examples() {
        let p0 = vec![PredicateSpec::coordinate("P0", 0)];
        let disk = Disk::new([("P0", 1.0)]);
        assert!(in_disk(&st(&[0.5]), &disk, &p0).unwrap());
        assert!(!in_disk(&st(&[1.5]), &disk, &p0).unwrap());
        let q2 = vec![PredicateSpec::new("q2", PredicateKind::QNorm { q: 2.0 })];
        assert!(in_disk(&st(&[0.6, 0.8]), &Disk::new([("q2", 1.0)]), &q2).unwrap());
    }

    #[test]
    fn disk_rejects_unknown_labels_and_negative_bounds() {
        let p0 = vec![PredicateSpec::coordinate("P0", 0)];
        assert!(matches!(
            in_disk(&st(&[0.0]), &Disk::new([("Q", 1.0)]), &p0),
            Err(Error::UnknownPredicate(_))
        ));
        assert!(in_disk(&st(&[0.0]), &Disk::new([("P0", -1.0)]), &p0).is_err());
    }

    #[test]
    fn block_predicate_reads_its_block() {
        let lifted = PredicateSpec::new(
            "P0@1",
            PredicateKind::Block { block: 1, width: 1, inner: Box::new(PredicateKind::Coordinate { index: 0 }) },
        );
        assert_eq!(lifted.eval_checked(&st(&[0.9, 0.45])).unwrap(), 0.45);
        assert!(lifted.validate(1).is_err());
    }

    #[test]
    fn enclosing_box_from_disk() {
        let preds = vec![PredicateSpec::coordinate("re", 0), PredicateSpec::coordinate("im", 1)];
        let disk = Disk::new([("re", 2.0), ("im", 1.0)]);
        let b = SampleBox::enclosing(&disk, &preds, 2, None).unwrap();
        assert_eq!(b.lo, vec![-2.0, -1.0]);
        assert_eq!(b.hi, vec![2.0, 1.0]);
        let region = SampleBox::cube(2, 0.0, 5.0).unwrap();
        let b = SampleBox::enclosing(&disk, &preds, 2, Some(&region)).unwrap();
        assert_eq!(b.lo, vec![0.0, 0.0]);
        assert!(SampleBox::enclosing(&Disk::default(), &preds, 2, None).is_err());
    }

    #[test]
    fn structure_validation() {
        let preds = PredicateSpec::coordinates(2);
        assert!(Structure::new(2, preds.clone(), Disk::new([("P0", 1.0)])).is_ok());
        assert!(Structure::new(1, preds.clone(), Disk::default()).is_err());
        let dup = vec![PredicateSpec::coordinate("P", 0), PredicateSpec::coordinate("P", 1)];
        assert!(Structure::new(2, dup, Disk::default()).is_err());
    }
}
