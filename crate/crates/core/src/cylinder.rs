//! Word-level combinatorics of cylinder sets.
//!
//! A [`TargetSet`] is a finite union of `n`-cylinders, i.e. an element of
//! `F_{0,n-1}`. Return floors are computed in the full sequence space: two
//! cylinders intersect after a shift exactly when the words agree on their
//! overlap, regardless of which transitions the measure allows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProcessModel, Symbol};

const MODULE: &str = "cylinder-combinatorics";

/// A nonempty, deduplicated set of equal-length words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Symbol>>", into = "Vec<Vec<Symbol>>")]
pub struct TargetSet {
    words: Vec<Vec<Symbol>>,
}

impl TargetSet {
    pub fn new(words: impl IntoIterator<Item = Vec<Symbol>>) -> Result<Self> {
        let mut words: Vec<Vec<Symbol>> = words.into_iter().collect();
        let Some(first) = words.first() else {
            return Err(Error::input(MODULE, "target set must contain at least one word"));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::input(MODULE, "target words must have length >= 1"));
        }
        if words.iter().any(|w| w.len() != n) {
            return Err(Error::input(MODULE, "target words must all have the same length"));
        }
        words.sort_unstable();
        words.dedup();
        Ok(TargetSet { words })
    }

    pub fn single(word: Vec<Symbol>) -> Result<Self> {
        Self::new([word])
    }

    /// Word length `n`; the set lies in `F_{0,n-1}`.
    pub fn len(&self) -> usize {
        self.words[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[Vec<Symbol>] {
        &self.words
    }

    pub fn contains(&self, word: &[Symbol]) -> bool {
        self.words.binary_search_by(|w| w.as_slice().cmp(word)).is_ok()
    }
}

impl TryFrom<Vec<Vec<Symbol>>> for TargetSet {
    type Error = Error;
    fn try_from(words: Vec<Vec<Symbol>>) -> Result<Self> {
        TargetSet::new(words)
    }
}

impl From<TargetSet> for Vec<Vec<Symbol>> {
    fn from(t: TargetSet) -> Self {
        t.words
    }
}

/// `T^s U`: either the set of suffixes or the whole space when `s = n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shifted {
    Target(TargetSet),
    FullSpace,
}

impl Shifted {
    pub fn prob(&self, model: &ProcessModel) -> Result<f64> {
        match self {
            Shifted::Target(t) => model.target_prob(t),
            Shifted::FullSpace => Ok(1.0),
        }
    }
}

pub fn shift_target(target: &TargetSet, s: usize) -> Result<Shifted> {
    let n = target.len();
    if s > n {
        return Err(Error::input(MODULE, format!("shift {s} exceeds word length {n}")));
    }
    if s == n {
        return Ok(Shifted::FullSpace);
    }
    Ok(Shifted::Target(TargetSet::new(target.words().iter().map(|w| w[s..].to_vec()))?))
}

/// Whether `[a] ∩ T^{-k}[b]` is nonempty: `a` shifted by `k` agrees with `b`
/// on their overlap.
fn overlaps_at(a: &[Symbol], b: &[Symbol], k: usize) -> bool {
    if k >= a.len() {
        return true;
    }
    let span = (a.len() - k).min(b.len());
    a[k..k + span] == b[..span]
}

/// Smallest period of a single word via its longest proper border.
fn word_period(w: &[Symbol]) -> usize {
    let n = w.len();
    let mut border = vec![0usize; n];
    let mut k = 0;
    for i in 1..n {
        while k > 0 && w[i] != w[k] {
            k = border[k - 1];
        }
        if w[i] == w[k] {
            k += 1;
        }
        border[i] = k;
    }
    n - border[n - 1]
}

/// `π(U) = min{k ≥ 1 : U ∩ T^{-k}U ≠ ∅}`; always at most `n`.
pub fn self_overlap_pi(target: &TargetSet) -> usize {
    let words = target.words();
    if let [w] = words {
        return word_period(w);
    }
    let n = target.len();
    (1..n)
        .find(|&k| words.iter().any(|a| words.iter().any(|b| overlaps_at(a, b, k))))
        .unwrap_or(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnFloors {
    pub pi_v: usize,
    pub pi_w: usize,
    pub pi_vw: usize,
    pub kappa: usize,
}

/// Cross return floor `π(V,W)` from either direction.
pub fn cross_overlap_pi(v: &TargetSet, w: &TargetSet) -> usize {
    let cap = v.len().min(w.len());
    (1..cap)
        .find(|&k| {
            v.words().iter().any(|a| w.words().iter().any(|b| overlaps_at(a, b, k) || overlaps_at(b, a, k)))
        })
        .unwrap_or(cap)
}

pub fn return_floors(v: &TargetSet, w: &TargetSet) -> ReturnFloors {
    let pi_v = self_overlap_pi(v);
    let pi_w = self_overlap_pi(w);
    let pi_vw = cross_overlap_pi(v, w);
    ReturnFloors { pi_v, pi_w, pi_vw, kappa: pi_vw.min(pi_v).min(pi_w) }
}

/// Cylinder-set disjointness of `V` and `W` in Ω.
pub fn are_disjoint(v: &TargetSet, w: &TargetSet) -> bool {
    let (short, long) = if v.len() <= w.len() { (v, w) } else { (w, v) };
    let n = short.len();
    !long.words().iter().any(|word| short.contains(&word[..n]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AperiodicityGap {
    pub kappa: usize,
    pub gap14: f64,
    pub gap15: f64,
}

/// The two length/overlap margins that must diverge along a family of
/// prefix pairs: `n∧m + κ − n∨m` and `2(n∧m) − n∨m − 3υ ln(n∧m)`.
pub fn gap_values(n: usize, m: usize, kappa: usize, upsilon: f64) -> (f64, f64) {
    let lo = n.min(m) as f64;
    let hi = n.max(m) as f64;
    (lo + kappa as f64 - hi, 2.0 * lo - hi - 3.0 * upsilon * lo.ln())
}

pub fn aperiodicity_gap(v: &TargetSet, w: &TargetSet, upsilon: f64) -> Result<AperiodicityGap> {
    if v.len() < 2 || w.len() < 2 {
        return Err(Error::input(MODULE, "aperiodicity gap needs word lengths >= 2"));
    }
    if upsilon.is_nan() || upsilon <= 0.0 {
        return Err(Error::input(MODULE, "upsilon must be positive"));
    }
    let kappa = return_floors(v, w).kappa;
    let (gap14, gap15) = gap_values(v.len(), w.len(), kappa, upsilon);
    Ok(AperiodicityGap { kappa, gap14, gap15 })
}

/// Thue–Morse sequence `t(i) = popcount(i) mod 2`, first `len` symbols.
pub fn thue_morse(len: usize) -> Vec<Symbol> {
    (0..len).map(|i| (i.count_ones() & 1) as Symbol).collect()
}

/// Prefix of length `len` of the periodic sequence `pattern^∞`.
pub fn periodic(pattern: &[Symbol], len: usize) -> Vec<Symbol> {
    pattern.iter().cycle().take(len).copied().collect()
}
