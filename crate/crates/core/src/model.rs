//! Stationary finite-alphabet sources.
//!
//! A [`ProcessModel`] is either an i.i.d. source or a stationary first-order
//! Markov chain on the alphabet. Both expose exact cylinder probabilities,
//! exact φ- and α-mixing coefficients, and a seeded trajectory sampler.
//!
//! For a stationary Markov chain the σ-algebra of the past collapses onto
//! the state at the last observed time, so
//!
//! ```text
//! φ(n) = max_a  ½ Σ_b |Pⁿ(a,b) − π(b)|
//! α(n) = max_{S,T} |Σ_{a∈S, b∈T} π(a) (Pⁿ(a,b) − π(b))|
//! ```
//!
//! Powers are taken of the deviation matrix `D = P − 1πᵀ`, which satisfies
//! `Dⁿ = Pⁿ − 1πᵀ`; working with `D` keeps the geometric decay visible far
//! below the rounding floor of `Pⁿ` itself.

use std::sync::Mutex;

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cylinder::TargetSet;
use crate::error::{Error, Result};

const MODULE: &str = "process-models";

/// Largest alphabet for which `alpha_coefficient` enumerates symbol subsets.
pub const ALPHA_SUBSET_LIMIT: usize = 20;

pub type Symbol = u8;

/// Ordered list of distinct symbol identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.len() < 2 {
            return Err(Error::input(MODULE, "alphabet must contain at least two symbols"));
        }
        if symbols.len() > 255 {
            return Err(Error::input(MODULE, "alphabet is limited to 255 symbols"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::input(MODULE, "empty symbol identifier"));
            }
            if symbols[..i].contains(s) {
                return Err(Error::input(MODULE, format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Alphabet { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<Symbol> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i as Symbol)
    }

    /// Parses a word. Without a separator every character is one symbol, which
    /// requires all symbol identifiers to be single characters.
    pub fn parse_word(&self, text: &str, separator: Option<&str>) -> Result<Vec<Symbol>> {
        let lookup = |tok: &str| {
            self.index_of(tok)
                .ok_or_else(|| Error::input(MODULE, format!("unknown symbol {tok:?} in word {text:?}")))
        };
        match separator.filter(|s| !s.is_empty()) {
            Some(sep) => text.split(sep).map(lookup).collect(),
            None => {
                if self.symbols.iter().any(|s| s.chars().count() != 1) {
                    return Err(Error::input(
                        MODULE,
                        "multi-character symbols require a word separator",
                    ));
                }
                let mut buf = [0u8; 4];
                text.chars().map(|c| lookup(c.encode_utf8(&mut buf))).collect()
            }
        }
    }

    pub fn format_word(&self, word: &[Symbol], separator: Option<&str>) -> String {
        let parts: Vec<&str> = word.iter().map(|&s| self.symbols[s as usize].as_str()).collect();
        parts.join(separator.unwrap_or(""))
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Alphabet::new(v)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Iid { probs: Vec<f64> },
    Markov { transition: DMatrix<f64>, stationary: Vec<f64> },
}

/// A stationary source over a finite alphabet. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    alphabet: Alphabet,
    kind: ModelKind,
    // cumulative sampling thresholds on the full u64 range; one row for IID,
    // the stationary row followed by one row per state for Markov
    thresholds: Vec<Vec<u64>>,
}

fn thresholds(probs: &[f64]) -> Vec<u64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        acc += p;
        // the `as` cast saturates at u64::MAX
        out.push((acc * 18_446_744_073_709_551_616.0) as u64);
    }
    if let Some(last) = out.last_mut() {
        *last = u64::MAX;
    }
    out
}

impl ProcessModel {
    pub fn iid(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.len() {
            return Err(Error::input(
                MODULE,
                format!("{} probabilities for {} symbols", probs.len(), alphabet.len()),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::input(MODULE, "every symbol probability must be positive"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::input(MODULE, format!("probabilities sum to {total}, not 1")));
        }
        let thresholds = vec![thresholds(&probs)];
        Ok(ProcessModel { alphabet, kind: ModelKind::Iid { probs }, thresholds })
    }

    /// Builds a stationary Markov chain. The chain must be irreducible so that
    /// the stationary vector is unique; periodic chains are accepted.
    pub fn markov(alphabet: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = alphabet.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::input(MODULE, format!("transition matrix must be {k}x{k}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::input(MODULE, format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::input(MODULE, format!("row {i} sums to {s}, not 1")));
            }
        }
        if !irreducible(&rows) {
            return Err(Error::input(
                MODULE,
                "transition matrix is not irreducible; stationary vector is not unique",
            ));
        }
        let transition = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        let stationary = solve_stationary(&transition)?;
        if stationary.iter().any(|&p| p <= 0.0) {
            return Err(Error::input(MODULE, "stationary vector has a zero entry"));
        }
        let mut table = vec![thresholds(&stationary)];
        table.extend(rows.iter().map(|r| thresholds(r)));
        Ok(ProcessModel {
            alphabet,
            kind: ModelKind::Markov { transition, stationary },
            thresholds: table,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_iid(&self) -> bool {
        matches!(self.kind, ModelKind::Iid { .. })
    }

    /// One-dimensional marginal: `probs` for IID, the stationary vector for Markov.
    pub fn marginal(&self) -> &[f64] {
        match &self.kind {
            ModelKind::Iid { probs } => probs,
            ModelKind::Markov { stationary, .. } => stationary,
        }
    }

    /// Probability of moving from `a` to `b` in `steps ≥ 1` steps.
    pub fn step_prob(&self, a: Symbol, b: Symbol) -> f64 {
        match &self.kind {
            ModelKind::Iid { probs } => probs[b as usize],
            ModelKind::Markov { transition, .. } => transition[(a as usize, b as usize)],
        }
    }

    /// `P^steps` as a dense matrix (rows = from, columns = to).
    pub fn transition_power(&self, steps: u64) -> DMatrix<f64> {
        let k = self.alphabet.len();
        match &self.kind {
            ModelKind::Iid { probs } => DMatrix::from_fn(k, k, |_, j| probs[j]),
            ModelKind::Markov { transition, .. } => matrix_power(transition, steps),
        }
    }

    fn check_word(&self, word: &[Symbol]) -> Result<()> {
        if let Some(&s) = word.iter().find(|&&s| s as usize >= self.alphabet.len()) {
            return Err(Error::input(MODULE, format!("symbol index {s} outside the alphabet")));
        }
        Ok(())
    }

    /// `P([w])` for a single word.
    pub fn word_prob(&self, word: &[Symbol]) -> Result<f64> {
        self.check_word(word)?;
        Ok(self.word_prob_unchecked(word))
    }

    pub(crate) fn word_prob_unchecked(&self, word: &[Symbol]) -> f64 {
        match &self.kind {
            ModelKind::Iid { probs } => word.iter().map(|&s| probs[s as usize]).product(),
            ModelKind::Markov { transition, stationary } => match word.first() {
                None => 1.0,
                Some(&first) => word.windows(2).fold(stationary[first as usize], |acc, w| {
                    acc * transition[(w[0] as usize, w[1] as usize)]
                }),
            },
        }
    }

    /// Probability of a union of distinct equal-length cylinders. An empty list is the empty set.
    pub fn words_prob(&self, words: &[Vec<Symbol>]) -> Result<f64> {
        let mut total = 0.0;
        for w in words {
            total += self.word_prob(w)?;
        }
        Ok(total)
    }

    pub fn target_prob(&self, target: &TargetSet) -> Result<f64> {
        self.words_prob(target.words())
    }

    /// Seeded sampler of the stationary process.
    pub fn stream(&self, seed: u64) -> SymbolStream<'_> {
        SymbolStream { model: self, rng: ChaCha8Rng::seed_from_u64(seed), state: None }
    }

    /// φ(n): the uniform mixing coefficient across a gap of `n` coordinates.
    pub fn phi_coefficient(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::input(MODULE, "phi coefficient needs n >= 1"));
        }
        Ok(match &self.kind {
            ModelKind::Iid { .. } => 0.0,
            ModelKind::Markov { .. } => phi_from_deviation(&matrix_power(&self.deviation(), n)),
        })
    }

    /// α(n): the strong mixing coefficient across a gap of `n` coordinates.
    pub fn alpha_coefficient(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::input(MODULE, "alpha coefficient needs n >= 1"));
        }
        let ModelKind::Markov { stationary, .. } = &self.kind else {
            return Ok(0.0);
        };
        let k = self.alphabet.len();
        if k > ALPHA_SUBSET_LIMIT {
            return Err(Error::capability(
                MODULE,
                format!(
                    "alpha coefficient enumerates 2^{k} state subsets (limit {ALPHA_SUBSET_LIMIT}); \
                     use phi_coefficient as an upper bound since alpha <= phi"
                ),
            ));
        }
        let dn = matrix_power(&self.deviation(), n);
        // weighted[a][b] = π(a) Dⁿ(a,b)
        let weighted: Vec<Vec<f64>> =
            (0..k).map(|a| (0..k).map(|b| stationary[a] * dn[(a, b)]).collect()).collect();
        let mut best = 0.0f64;
        let mut col = vec![0.0; k];
        for mask in 1u32..(1u32 << k) {
            col.iter_mut().for_each(|c| *c = 0.0);
            for (a, row) in weighted.iter().enumerate() {
                if mask & (1 << a) != 0 {
                    for (c, w) in col.iter_mut().zip(row) {
                        *c += w;
                    }
                }
            }
            let pos: f64 = col.iter().filter(|c| **c > 0.0).sum();
            let neg: f64 = -col.iter().filter(|c| **c < 0.0).sum::<f64>();
            best = best.max(pos).max(neg);
        }
        Ok(best.min(1.0))
    }

    /// Largest `n`-cylinder probability and the exponent `υₙ = −ln(max)/n`.
    pub fn max_cylinder_prob(&self, n: usize) -> Result<(f64, f64)> {
        if n == 0 {
            return Err(Error::input(MODULE, "cylinder length must be >= 1"));
        }
        let best = match &self.kind {
            ModelKind::Iid { probs } => {
                let top = probs.iter().cloned().fold(0.0, f64::max);
                top.powi(n as i32)
            }
            ModelKind::Markov { transition, stationary } => {
                let k = stationary.len();
                let mut v = stationary.clone();
                for _ in 1..n {
                    v = (0..k)
                        .map(|b| (0..k).map(|a| v[a] * transition[(a, b)]).fold(0.0, f64::max))
                        .collect();
                }
                v.into_iter().fold(0.0, f64::max)
            }
        };
        Ok((best, -best.ln() / n as f64))
    }

    /// Exact mixing profile of this model with a memo table.
    pub fn mixing_profile(&self) -> MixingProfile {
        match &self.kind {
            ModelKind::Iid { .. } => MixingProfile::independent(),
            ModelKind::Markov { .. } => MixingProfile::markov(self.deviation()),
        }
    }

    fn deviation(&self) -> DMatrix<f64> {
        match &self.kind {
            ModelKind::Iid { .. } => DMatrix::zeros(self.alphabet.len(), self.alphabet.len()),
            ModelKind::Markov { transition, stationary } => {
                let k = stationary.len();
                DMatrix::from_fn(k, k, |i, j| transition[(i, j)] - stationary[j])
            }
        }
    }
}

fn irreducible(rows: &[Vec<f64>]) -> bool {
    let k = rows.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let edge = if forward { rows[i][j] } else { rows[j][i] };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn solve_stationary(transition: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = transition.nrows();
    // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1
    let mut a = transition.transpose() - DMatrix::identity(k, k);
    let mut rhs = nalgebra::DVector::zeros(k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    rhs[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::input(MODULE, "stationary system is singular"))?;
    let pi: Vec<f64> = pi.iter().cloned().collect();
    for j in 0..k {
        let lhs: f64 = (0..k).map(|i| pi[i] * transition[(i, j)]).sum();
        if (lhs - pi[j]).abs() > 1e-10 {
            return Err(Error::input(MODULE, "stationary vector failed the balance check"));
        }
    }
    Ok(pi)
}

pub(crate) fn matrix_power(m: &DMatrix<f64>, mut e: u64) -> DMatrix<f64> {
    let k = m.nrows();
    let mut result = DMatrix::identity(k, k);
    let mut base = m.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn phi_from_deviation(dn: &DMatrix<f64>) -> f64 {
    dn.row_iter()
        .map(|row| 0.5 * row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSource {
    ExactFromModel,
    UserSuppliedDecay,
}

#[derive(Debug)]
enum ProfileKind {
    Independent,
    Markov { deviation: DMatrix<f64>, memo: Mutex<MarkovMemo> },
    Decay(Vec<f64>),
}

#[derive(Debug)]
struct MarkovMemo {
    // values[i] = φ(i + 1), running-minimum enforced
    values: Vec<f64>,
    power: DMatrix<f64>,
}

/// The map `n ↦ φ(n)` for `n ≥ 1`, nonincreasing and valued in `[0, 1]`.
#[derive(Debug)]
pub struct MixingProfile {
    kind: ProfileKind,
    warnings: Vec<String>,
}

impl Clone for MixingProfile {
    fn clone(&self) -> Self {
        let kind = match &self.kind {
            ProfileKind::Independent => ProfileKind::Independent,
            ProfileKind::Decay(v) => ProfileKind::Decay(v.clone()),
            ProfileKind::Markov { deviation, .. } => {
                return MixingProfile::markov(deviation.clone());
            }
        };
        MixingProfile { kind, warnings: self.warnings.clone() }
    }
}

impl MixingProfile {
    pub fn independent() -> Self {
        MixingProfile { kind: ProfileKind::Independent, warnings: Vec::new() }
    }

    fn markov(deviation: DMatrix<f64>) -> Self {
        let k = deviation.nrows();
        let memo = MarkovMemo { values: Vec::new(), power: DMatrix::identity(k, k) };
        MixingProfile {
            kind: ProfileKind::Markov { deviation, memo: Mutex::new(memo) },
            warnings: Vec::new(),
        }
    }

    /// User-supplied decay `values[i] = φ(i+1)`. Values are clamped to `[0,1]`
    /// and replaced by their running minimum; each modification is recorded
    /// in [`MixingProfile::warnings`]. Beyond the table the last value is held.
    pub fn from_decay(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input(MODULE, "mixing decay table is empty"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::input(MODULE, "mixing decay table contains NaN"));
        }
        let mut warnings = Vec::new();
        let mut out = Vec::with_capacity(values.len());
        let mut running = 1.0f64;
        for (i, &v) in values.iter().enumerate() {
            let clamped = v.clamp(0.0, 1.0);
            if clamped != v {
                warnings.push(format!("phi({}) = {v} clamped to {clamped}", i + 1));
            }
            if clamped > running {
                warnings.push(format!(
                    "phi({}) = {clamped} raised above phi({}) = {running}; lowered to keep phi nonincreasing",
                    i + 1,
                    i
                ));
            }
            running = running.min(clamped);
            out.push(running);
        }
        Ok(MixingProfile { kind: ProfileKind::Decay(out), warnings })
    }

    pub fn source(&self) -> ProfileSource {
        match self.kind {
            ProfileKind::Decay(_) => ProfileSource::UserSuppliedDecay,
            _ => ProfileSource::ExactFromModel,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// φ(n) for `n ≥ 1`. `phi(0)` is defined as 1, the trivial bound.
    pub fn phi(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        match &self.kind {
            ProfileKind::Independent => 0.0,
            ProfileKind::Decay(v) => v[(n as usize).min(v.len()) - 1],
            ProfileKind::Markov { deviation, memo } => {
                let mut memo = memo.lock().expect("phi memo poisoned");
                while (memo.values.len() as u64) < n {
                    let last = memo.values.last().copied().unwrap_or(1.0);
                    if last == 0.0 {
                        // Dⁿ has underflowed; every later value is zero too
                        return 0.0;
                    }
                    memo.power = &memo.power * deviation;
                    let value = phi_from_deviation(&memo.power).min(last);
                    memo.values.push(value);
                }
                memo.values[n as usize - 1]
            }
        }
    }

    /// Smallest `n ≥ 1` with φ(n) = 0, scanning at most `limit` values.
    pub fn first_zero(&self, limit: u64) -> Option<u64> {
        match &self.kind {
            ProfileKind::Independent => Some(1),
            _ => (1..=limit).find(|&n| self.phi(n) == 0.0),
        }
    }
}

/// Stateful sampler of one trajectory `ω₀, ω₁, …`. Single owner; create one
/// per worker from distinct seeds.
pub struct SymbolStream<'a> {
    model: &'a ProcessModel,
    rng: ChaCha8Rng,
    state: Option<Symbol>,
}

impl SymbolStream<'_> {
    #[inline]
    fn pick(row: &[u64], u: u64) -> Symbol {
        let last = row.len() - 1;
        for (i, &t) in row[..last].iter().enumerate() {
            if u < t {
                return i as Symbol;
            }
        }
        last as Symbol
    }

    #[inline]
    pub fn next_symbol(&mut self) -> Symbol {
        let u = self.rng.next_u64();
        let table = &self.model.thresholds;
        let s = if table.len() == 1 {
            Self::pick(&table[0], u)
        } else {
            match self.state {
                None => Self::pick(&table[0], u),
                Some(prev) => Self::pick(&table[prev as usize + 1], u),
            }
        };
        self.state = Some(s);
        s
    }
}

impl Iterator for SymbolStream<'_> {
    type Item = Symbol;
    fn next(&mut self) -> Option<Symbol> {
        Some(self.next_symbol())
    }
}
