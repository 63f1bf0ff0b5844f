//! Exact deep equilibria of self-maps of a finite set `[m] = {1, ..., m}`.
//!
//! Every self-map of a finite set has a functional graph made of cycles with
//! trees hanging off them. Past the longest tail the image stops shrinking and
//! `f` permutes that eventual image; if `K` is the order of that permutation
//! then `f^N` is idempotent exactly when `N` is at least the tail length and a
//! multiple of `K`. The equilibrium returned here uses the least such `N`; any
//! larger `N` with the same two properties gives the same table.

use std::collections::BTreeSet;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A map `[m] -> [m]` stored as a 1-based table, `table[i - 1] = f(i)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct FiniteMap {
    table: Vec<u32>,
}

impl FiniteMap {
    pub fn new(table: Vec<u32>) -> Result<Self> {
        let m = table.len();
        if m == 0 {
            return Err(Error::InvalidMap("table must be nonempty".into()));
        }
        if u32::try_from(m).is_err() {
            return Err(Error::InvalidMap("table too large".into()));
        }
        if let Some((i, &v)) = table.iter().enumerate().find(|(_, &v)| v == 0 || v as usize > m) {
            return Err(Error::InvalidMap(format!(
                "entry {} maps to {v}, outside [1, {m}]",
                i + 1
            )));
        }
        Ok(FiniteMap { table })
    }

    pub fn identity(m: usize) -> Self {
        FiniteMap { table: (1..=m as u32).collect() }
    }

    /// Constant map onto `c` on `[m]`.
    pub fn constant(m: usize, c: u32) -> Result<Self> {
        Self::new(vec![c; m])
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &[u32] {
        &self.table
    }

    /// `f(i)` for `i` in `[1, m]`.
    pub fn apply(&self, i: u32) -> u32 {
        self.table[i as usize - 1]
    }

    /// `self ∘ inner`, i.e. `i -> self(inner(i))`.
    pub fn after(&self, inner: &FiniteMap) -> FiniteMap {
        debug_assert_eq!(self.len(), inner.len());
        FiniteMap { table: inner.table.iter().map(|&j| self.apply(j)).collect() }
    }

    /// `f^n` by repeated squaring.
    pub fn power(&self, mut n: u128) -> FiniteMap {
        let mut result = FiniteMap::identity(self.len());
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = base.after(&result);
            }
            n >>= 1;
            if n > 0 {
                base = base.after(&base);
            }
        }
        result
    }

    pub fn image(&self) -> BTreeSet<u32> {
        self.table.iter().copied().collect()
    }
}

impl TryFrom<Vec<u32>> for FiniteMap {
    type Error = Error;

    fn try_from(table: Vec<u32>) -> Result<Self> {
        FiniteMap::new(table)
    }
}

impl From<FiniteMap> for Vec<u32> {
    fn from(map: FiniteMap) -> Self {
        map.table
    }
}

/// Structure of the functional graph of a finite map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphAnalysis {
    /// Least `n >= 1` with `#f^n([m]) = #f^{n+1}([m])`.
    pub tail_n: u32,
    /// The eventual image `f^{tail_n}([m])`, on which `f` is a bijection.
    pub core: BTreeSet<u32>,
    /// Cycle lengths of `f` on the core, sorted ascending.
    pub cycle_lengths: Vec<u32>,
    /// Least common multiple of the cycle lengths.
    pub order_k: u128,
}

/// The exact deep equilibrium `f* = f^N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteEquilibrium {
    pub n: u128,
    pub f_star: FiniteMap,
    pub analysis: GraphAnalysis,
}

/// Tail length and cycle structure by iterated image shrinking.
pub fn analyze_functional_graph(f: &FiniteMap) -> Result<GraphAnalysis> {
    let mut image = f.image();
    let mut tail_n = 1u32;
    loop {
        let next: BTreeSet<u32> = image.iter().map(|&i| f.apply(i)).collect();
        if next.len() == image.len() {
            break;
        }
        image = next;
        tail_n += 1;
    }

    let mut visited = BTreeSet::new();
    let mut cycle_lengths = Vec::new();
    for &start in &image {
        if visited.contains(&start) {
            continue;
        }
        let mut len = 0u32;
        let mut i = start;
        loop {
            visited.insert(i);
            len += 1;
            i = f.apply(i);
            if i == start {
                break;
            }
        }
        cycle_lengths.push(len);
    }
    cycle_lengths.sort_unstable();

    let mut order_k: u128 = 1;
    for &len in &cycle_lengths {
        let g = order_k.gcd(&(len as u128));
        order_k = (order_k / g).checked_mul(len as u128).ok_or(Error::OrderOverflow)?;
    }

    Ok(GraphAnalysis { tail_n, core: image, cycle_lengths, order_k })
}

/// The least `N` that is a multiple of the core order and at least the tail,
/// together with `f^N`.
pub fn deep_equilibrium_finite(f: &FiniteMap) -> Result<FiniteEquilibrium> {
    let analysis = analyze_functional_graph(f)?;
    let k = analysis.order_k;
    let n = (analysis.tail_n as u128).div_ceil(k) * k;
    let f_star = f.power(n);
    Ok(FiniteEquilibrium { n, f_star, analysis })
}

/// `g(g(i)) = g(i)` for every `i`.
pub fn verify_idempotent_finite(g: &FiniteMap) -> bool {
    g.table.iter().all(|&j| g.apply(j) == j)
}

/// Distinct idempotent iterates `f^n` for `1 <= n <= n_max`.
pub fn enumerate_idempotent_iterates(f: &FiniteMap, n_max: u64) -> BTreeSet<FiniteMap> {
    let mut found = BTreeSet::new();
    let mut current = f.clone();
    for n in 1..=n_max {
        if verify_idempotent_finite(&current) {
            found.insert(current.clone());
        }
        if n < n_max {
            current = f.after(&current);
        }
    }
    found
}
