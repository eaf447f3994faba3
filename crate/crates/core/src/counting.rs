//! Scheduled hit indicators, the statistics `S_N` and `Σ_N`, and Monte Carlo
//! aggregation.
//!
//! A trajectory is produced once, in increasing position order, and each
//! scheduled window `ω[q_N(k) .. q_N(k)+n)` is matched when its last symbol
//! arrives. Schedules need not be monotone in `k`, so positions are sorted
//! once per `(schedule, N)` into a [`ScanPlan`] that is shared by all samples.
//! Only a ring buffer of the last `max(n, m)` symbols is kept.
//!
//! For i.i.d. models the symbols outside every window are never drawn, since
//! they cannot influence any indicator.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cylinder::{are_disjoint, TargetSet};
use crate::error::{Error, Result};
use crate::laws::DiscreteLaw;
use crate::model::{ProcessModel, Symbol, SymbolStream};
use crate::schedule::Schedule;

const MODULE: &str = "counting-engine";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Output `i` of a SplitMix64 generator started at `master_seed`. This is the
/// per-sample seed of sample `i`.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which statistic a Monte Carlo run aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `S_N`, the number of scheduled hits of `V`.
    Poisson,
    /// `Σ_N` capped at `N`: hits of `V` up to the first scheduled hit of `W`.
    Geometric,
}

/// Per-`k` hit bits: bit `k−1` of `x0` (resp. `x1`) is set when the window
/// at `q_N(k)` lies in `V` (resp. `W`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HitVector {
    pub x0: Vec<u64>,
    pub x1: Option<Vec<u64>>,
    pub n: usize,
}

impl HitVector {
    pub fn new(n: usize, with_w: bool) -> Self {
        let words = n.div_ceil(64);
        HitVector { x0: vec![0; words], x1: with_w.then(|| vec![0; words]), n }
    }

    /// Builds a vector from explicit per-`k` bits (`bits[k−1]`).
    pub fn from_bits(x0: &[bool], x1: Option<&[bool]>) -> Self {
        let mut h = HitVector::new(x0.len(), x1.is_some());
        for (i, &b) in x0.iter().enumerate() {
            if b {
                set_bit(&mut h.x0, i);
            }
        }
        if let (Some(bits), Some(x1)) = (x1, h.x1.as_mut()) {
            for (i, &b) in bits.iter().enumerate() {
                if b {
                    set_bit(x1, i);
                }
            }
        }
        h
    }

    /// Hit of `V` at `k` (1-based).
    pub fn v_hit(&self, k: usize) -> bool {
        get_bit(&self.x0, k - 1)
    }

    /// Hit of `W` at `k` (1-based); `false` without `W`.
    pub fn w_hit(&self, k: usize) -> bool {
        self.x1.as_ref().is_some_and(|x| get_bit(x, k - 1))
    }

    fn clear(&mut self) {
        self.x0.fill(0);
        if let Some(x1) = self.x1.as_mut() {
            x1.fill(0);
        }
    }
}

#[inline]
fn set_bit(v: &mut [u64], i: usize) {
    v[i / 64] |= 1 << (i % 64);
}

#[inline]
fn get_bit(v: &[u64], i: usize) -> bool {
    v[i / 64] >> (i % 64) & 1 == 1
}

/// Popcount of bits `0..len`.
fn popcount_prefix(v: &[u64], len: usize) -> u32 {
    let full = len / 64;
    let mut c: u32 = v[..full].iter().map(|w| w.count_ones()).sum();
    let rem = len % 64;
    if rem > 0 {
        c += (v[full] & ((1u64 << rem) - 1)).count_ones();
    }
    c
}

fn first_set(v: &[u64], len: usize) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
        .filter(|&i| i < len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSummary {
    /// `S_N`
    pub s: u32,
    /// `τ_W`, or `None` when `W` is never hit for `k ≤ N` (censored).
    pub tau: Option<u32>,
    /// `Σ_N` counted over `k ≤ min(τ, N)`; present when `W` is.
    pub sigma_capped: Option<u32>,
    pub censored: bool,
}

pub fn summarize_counts(h: &HitVector) -> CountSummary {
    let s = popcount_prefix(&h.x0, h.n);
    match &h.x1 {
        None => CountSummary { s, tau: None, sigma_capped: None, censored: false },
        Some(x1) => {
            let tau = first_set(x1, h.n).map(|i| i as u32 + 1);
            let upto = tau.map_or(h.n, |t| t as usize);
            CountSummary {
                s,
                tau,
                sigma_capped: Some(popcount_prefix(&h.x0, upto)),
                censored: tau.is_none(),
            }
        }
    }
}

/// Window matcher: words packed into base-|A| integers when they fit in 64 bits.
#[derive(Debug, Clone)]
enum Matcher {
    Packed { len: usize, base: u64, codes: Vec<u64> },
    Words { words: Vec<Vec<Symbol>> },
}

impl Matcher {
    fn new(target: &TargetSet, alphabet_len: usize) -> Self {
        let len = target.len();
        let base = alphabet_len as u64;
        if base.checked_pow(len as u32).is_some() {
            let mut codes: Vec<u64> = target.words().iter().map(|w| pack(w, base)).collect();
            codes.sort_unstable();
            Matcher::Packed { len, base, codes }
        } else {
            Matcher::Words { words: target.words().to_vec() }
        }
    }

    #[inline]
    fn matches(&self, ring: &[Symbol], mask: u64, start: u64) -> bool {
        match self {
            Matcher::Packed { len, base, codes } => {
                let mut code = 0u64;
                for j in (0..*len as u64).rev() {
                    code = code * base + ring[((start + j) & mask) as usize] as u64;
                }
                if codes.len() == 1 {
                    codes[0] == code
                } else {
                    codes.binary_search(&code).is_ok()
                }
            }
            Matcher::Words { words } => words
                .iter()
                .any(|w| w.iter().enumerate().all(|(j, &a)| ring[((start + j as u64) & mask) as usize] == a)),
        }
    }
}

fn pack(word: &[Symbol], base: u64) -> u64 {
    word.iter().rev().fold(0u64, |acc, &a| acc * base + a as u64)
}

/// Sorted scheduled positions for one `(schedule, N)`, each with the list of
/// `k` values observing it.
#[derive(Debug, Clone)]
pub struct ScanPlan {
    n: usize,
    positions: Vec<u64>,
    /// `ks[offsets[i]..offsets[i+1]]` are the 0-based `k−1` at `positions[i]`.
    offsets: Vec<usize>,
    ks: Vec<u32>,
    window: usize,
    v: Matcher,
    w: Option<Matcher>,
}

impl ScanPlan {
    pub fn new(
        model: &ProcessModel,
        v: &TargetSet,
        w: Option<&TargetSet>,
        schedule: &Schedule,
        n: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::input(MODULE, "N must be >= 1"));
        }
        if n > u32::MAX as u64 {
            return Err(Error::capability(MODULE, format!("N={n} exceeds the supported range")));
        }
        model.target_prob(v)?;
        if let Some(w) = w {
            model.target_prob(w)?;
        }
        let mut pairs: Vec<(u64, u32)> =
            schedule.positions(n)?.into_iter().enumerate().map(|(i, p)| (p, i as u32)).collect();
        pairs.sort_unstable();
        let mut positions = Vec::new();
        let mut offsets = Vec::new();
        let mut ks = Vec::with_capacity(pairs.len());
        for (p, k) in pairs {
            if positions.last() != Some(&p) {
                positions.push(p);
                offsets.push(ks.len());
            }
            ks.push(k);
        }
        offsets.push(ks.len());
        let window = w.map_or(v.len(), |w| v.len().max(w.len()));
        if positions.last().unwrap().checked_add(window as u64).is_none() {
            return Err(Error::capability(MODULE, "trajectory length overflows u64"));
        }
        let alen = model.alphabet().len();
        Ok(ScanPlan {
            n: n as usize,
            positions,
            offsets,
            ks,
            window,
            v: Matcher::new(v, alen),
            w: w.map(|w| Matcher::new(w, alen)),
        })
    }

    /// Length `max_k q_N(k) + max(n, m)` of the trajectory prefix that is read.
    pub fn trajectory_len(&self) -> u64 {
        self.positions.last().unwrap() + self.window as u64
    }

    /// Fills `hits` by reading symbols from `source` at strictly increasing
    /// indices covering every window.
    fn scan(&self, source: &mut impl SymbolSource, ring: &mut [Symbol], hits: &mut HitVector) {
        hits.clear();
        let mask = ring.len() as u64 - 1;
        let win = self.window as u64;
        let mut next = 0u64;
        for (i, &p) in self.positions.iter().enumerate() {
            for idx in next.max(p)..p + win {
                ring[(idx & mask) as usize] = source.at(idx);
            }
            next = p + win;
            let ks = &self.ks[self.offsets[i]..self.offsets[i + 1]];
            if self.v.matches(ring, mask, p) {
                for &k in ks {
                    set_bit(&mut hits.x0, k as usize);
                }
            }
            if let (Some(wm), Some(x1)) = (&self.w, hits.x1.as_mut()) {
                if wm.matches(ring, mask, p) {
                    for &k in ks {
                        set_bit(x1, k as usize);
                    }
                }
            }
        }
    }
}

trait SymbolSource {
    /// Symbol at `index`; called with strictly increasing indices.
    fn at(&mut self, index: u64) -> Symbol;
}

/// Markov streams must be advanced through every intermediate index.
struct Sequential<'a> {
    stream: SymbolStream<'a>,
    pos: u64,
}

impl SymbolSource for Sequential<'_> {
    #[inline]
    fn at(&mut self, index: u64) -> Symbol {
        while self.pos < index {
            self.stream.next_symbol();
            self.pos += 1;
        }
        self.pos += 1;
        self.stream.next_symbol()
    }
}

/// i.i.d. symbols are independent of the skipped ones.
struct Skipping<'a> {
    stream: SymbolStream<'a>,
}

impl SymbolSource for Skipping<'_> {
    #[inline]
    fn at(&mut self, _index: u64) -> Symbol {
        self.stream.next_symbol()
    }
}

struct Fixed<'a>(&'a [Symbol]);

impl SymbolSource for Fixed<'_> {
    fn at(&mut self, index: u64) -> Symbol {
        self.0[index as usize]
    }
}

/// Reusable per-worker scratch space.
struct Scanner<'a> {
    plan: &'a ScanPlan,
    model: &'a ProcessModel,
    ring: Vec<Symbol>,
    hits: HitVector,
}

impl<'a> Scanner<'a> {
    fn new(plan: &'a ScanPlan, model: &'a ProcessModel) -> Self {
        Scanner {
            plan,
            model,
            ring: vec![0; plan.window.next_power_of_two()],
            hits: HitVector::new(plan.n, plan.w.is_some()),
        }
    }

    fn run_seed(&mut self, seed: u64) -> &HitVector {
        let stream = self.model.stream(seed);
        if self.model.is_iid() {
            self.plan.scan(&mut Skipping { stream }, &mut self.ring, &mut self.hits);
        } else {
            self.plan.scan(&mut Sequential { stream, pos: 0 }, &mut self.ring, &mut self.hits);
        }
        &self.hits
    }

    fn run_fixed(&mut self, trajectory: &[Symbol]) -> &HitVector {
        self.plan.scan(&mut Fixed(trajectory), &mut self.ring, &mut self.hits);
        &self.hits
    }
}

/// Hit vector of one sampled trajectory.
pub fn evaluate_hits(
    model: &ProcessModel,
    v: &TargetSet,
    w: Option<&TargetSet>,
    schedule: &Schedule,
    n: u64,
    seed: u64,
) -> Result<HitVector> {
    let plan = ScanPlan::new(model, v, w, schedule, n)?;
    Ok(Scanner::new(&plan, model).run_seed(seed).clone())
}

/// Hit vector of a given trajectory prefix, which must cover
/// [`ScanPlan::trajectory_len`] symbols.
pub fn evaluate_hits_on(
    model: &ProcessModel,
    v: &TargetSet,
    w: Option<&TargetSet>,
    schedule: &Schedule,
    n: u64,
    trajectory: &[Symbol],
) -> Result<HitVector> {
    let plan = ScanPlan::new(model, v, w, schedule, n)?;
    if (trajectory.len() as u64) < plan.trajectory_len() {
        return Err(Error::input(
            MODULE,
            format!("trajectory has {} symbols, {} needed", trajectory.len(), plan.trajectory_len()),
        ));
    }
    Ok(Scanner::new(&plan, model).run_fixed(trajectory).clone())
}

/// Histogram of an integer statistic over `m` samples. Censored samples sit
/// at their capped value and are also counted in `censored_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// `counts[v]` = number of samples with value `v`.
    pub counts: Vec<u64>,
    pub m: u64,
    pub censored_count: u64,
}

impl EmpiricalDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.m as f64).collect()
    }

    pub fn to_law(&self) -> DiscreteLaw {
        let mut pmf = self.probabilities();
        while pmf.len() > 1 && pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        DiscreteLaw::Explicit { pmf, tail: 0.0 }
    }

    pub fn mean(&self) -> f64 {
        self.counts.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum::<f64>() / self.m as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored_count as f64 / self.m as f64
    }

    /// Writes `value,count,probability` rows after `# censored_count`, `# M`
    /// and `# seed` header lines.
    pub fn write_csv<W: Write>(&self, mut out: W, master_seed: u64) -> Result<()> {
        let io = |e| Error::io("histogram csv", e);
        writeln!(out, "# censored_count,{}", self.censored_count).map_err(io)?;
        writeln!(out, "# M,{}", self.m).map_err(io)?;
        writeln!(out, "# seed,{master_seed}").map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "count", "probability"]).map_err(csv_err)?;
        for (v, (&c, p)) in self.counts.iter().zip(self.probabilities()).enumerate() {
            w.write_record([v.to_string(), c.to_string(), format!("{p:e}")]).map_err(csv_err)?;
        }
        w.flush().map_err(io)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("histogram csv", std::io::Error::other(e))
}

#[derive(Clone)]
struct Tally {
    counts: Vec<u64>,
    censored: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.censored += other.censored;
        self
    }
}

/// Empirical law of `S_N` (no `W`) or of `Σ_N` capped at `N` (with `W`) over
/// `m` samples. Sample `i` uses [`sample_seed`]`(master_seed, i)`; the result
/// does not depend on `workers`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    model: &ProcessModel,
    v: &TargetSet,
    w: Option<&TargetSet>,
    schedule: &Schedule,
    n: u64,
    m: u64,
    master_seed: u64,
    workers: usize,
) -> Result<EmpiricalDistribution> {
    if m == 0 {
        return Err(Error::input(MODULE, "M must be >= 1"));
    }
    if workers == 0 {
        return Err(Error::input(MODULE, "workers must be >= 1"));
    }
    if let Some(w) = w {
        if !are_disjoint(v, w) {
            return Err(Error::precondition(
                MODULE,
                "geometric mode needs V and W disjoint; the geometric limit is stated for any disjoint sets V, W",
            ));
        }
    }
    let plan = ScanPlan::new(model, v, w, schedule, n)?;
    let mode = if w.is_some() { Mode::Geometric } else { Mode::Poisson };
    let empty = Tally { counts: vec![0; n as usize + 1], censored: 0 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::capability(MODULE, format!("cannot start worker pool: {e}")))?;
    let chunk = m.div_ceil(workers as u64 * 16).clamp(1, 1 << 16);
    let tally = pool.install(|| {
        (0..m.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut scanner = Scanner::new(&plan, model);
                let mut tally = empty.clone();
                for i in c * chunk..((c + 1) * chunk).min(m) {
                    let summary = summarize_counts(scanner.run_seed(sample_seed(master_seed, i)));
                    let value = match mode {
                        Mode::Poisson => summary.s,
                        Mode::Geometric => summary.sigma_capped.unwrap_or(summary.s),
                    };
                    tally.counts[value as usize] += 1;
                    tally.censored += summary.censored as u64;
                }
                tally
            })
            .reduce(|| empty.clone(), Tally::merge)
    });
    Ok(EmpiricalDistribution { counts: tally.counts, m, censored_count: tally.censored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::tv_distance;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use crate::model::Alphabet;

    fn ab() -> Alphabet {
        Alphabet::new(["a", "b"]).unwrap()
    }

    fn iid(p: f64) -> ProcessModel {
        ProcessModel::iid(ab(), vec![p, 1.0 - p]).unwrap()
    }

    fn markov() -> ProcessModel {
        ProcessModel::markov(ab(), vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    fn word(s: &str) -> TargetSet {
        TargetSet::single(ab().parse_word(s, None).unwrap()).unwrap()
    }

    fn bits(h: &HitVector, w: bool) -> Vec<bool> {
        (1..=h.n).map(|k| if w { h.w_hit(k) } else { h.v_hit(k) }).collect()
    }

    fn binomial(n: u64, p: f64) -> DiscreteLaw {
        let mut pmf = vec![0.0; n as usize + 1];
        pmf[0] = 1.0;
        for _ in 0..n {
            for k in (0..=n as usize).rev() {
                pmf[k] = pmf[k] * (1.0 - p) + if k > 0 { pmf[k - 1] * p } else { 0.0 };
            }
        }
        DiscreteLaw::Explicit { pmf, tail: 0.0 }
    }

    #[test]
    fn hits_on_given_trajectories() {
        let traj = ab().parse_word("baab", None).unwrap();
        let h = evaluate_hits_on(&iid(0.5), &word("a"), None, &Schedule::linear(0), 3, &traj).unwrap();
        assert_eq!(bits(&h, false), vec![true, true, false]);

        let traj = ab().parse_word("abab", None).unwrap();
        let h = evaluate_hits_on(&iid(0.5), &word("ab"), None, &Schedule::linear(0), 2, &traj).unwrap();
        assert_eq!(bits(&h, false), vec![false, true]);

        let short = ab().parse_word("aba", None).unwrap();
        assert!(evaluate_hits_on(&iid(0.5), &word("ab"), None, &Schedule::linear(0), 2, &short).is_err());
    }

    #[test]
    fn colliding_positions_share_a_bit() {
        // q_4 = (3, 4, 3, 0) for k = 1..4
        let traj = ab().parse_word("bbbab", None).unwrap();
        let h = evaluate_hits_on(&iid(0.5), &word("a"), None, &Schedule::bilinear(), 4, &traj).unwrap();
        assert_eq!(bits(&h, false), vec![true, false, true, false]);
    }

    #[test]
    fn summary_examples() {
        let h = HitVector::from_bits(&[true, true, false], Some(&[false, false, true]));
        let s = summarize_counts(&h);
        assert_eq!(s, CountSummary { s: 2, tau: Some(3), sigma_capped: Some(2), censored: false });

        let h = HitVector::from_bits(&[true, false, true, false, true], Some(&[false; 5]));
        let s = summarize_counts(&h);
        assert_eq!(s, CountSummary { s: 3, tau: None, sigma_capped: Some(3), censored: true });

        let h = HitVector::from_bits(&[true, false, true], None);
        assert_eq!(summarize_counts(&h).s, 2);
        assert_eq!(summarize_counts(&h).sigma_capped, None);
    }

    #[test]
    fn popcount_matches_naive_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = 1 + (rng.next_u64() % 300) as usize;
            let density = rng.next_u64() % 100;
            let mut draw = |_: usize| rng.next_u64() % 100 < density;
            let x0: Vec<bool> = (0..n).map(&mut draw).collect();
            let x1: Vec<bool> = (0..n).map(&mut draw).collect();
            let s = summarize_counts(&HitVector::from_bits(&x0, Some(&x1)));
            let naive_s = x0.iter().filter(|&&b| b).count() as u32;
            let naive_tau = x1.iter().position(|&b| b).map(|i| i as u32 + 1);
            let upto = naive_tau.map_or(n, |t| t as usize);
            let naive_sigma = x0[..upto].iter().filter(|&&b| b).count() as u32;
            assert_eq!(s.s, naive_s);
            assert_eq!(s.tau, naive_tau);
            assert_eq!(s.sigma_capped, Some(naive_sigma));
            assert_eq!(s.censored, naive_tau.is_none());
        }
    }

    #[test]
    fn same_seed_same_hits() {
        let m = markov();
        let sched = Schedule::bilinear();
        let a = evaluate_hits(&m, &word("ab"), Some(&word("ba")), &sched, 40, 99).unwrap();
        let b = evaluate_hits(&m, &word("ab"), Some(&word("ba")), &sched, 40, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hits_agree_with_the_stream() {
        let m = markov();
        let sched = Schedule::polynomial(vec![1, 0, 1], Default::default()).unwrap();
        let n = 12;
        for seed in 0..50 {
            let h = evaluate_hits(&m, &word("aab"), None, &sched, n, seed).unwrap();
            let traj: Vec<Symbol> = m.stream(seed).take(200).collect();
            for k in 1..=n {
                let p = sched.eval(n, k).unwrap() as usize;
                assert_eq!(h.v_hit(k as usize), traj[p..p + 3] == [0, 0, 1]);
            }
        }
    }

    #[test]
    fn disjoint_targets_never_hit_together() {
        let m = markov();
        for seed in 0..1000 {
            let h = evaluate_hits(&m, &word("ab"), Some(&word("ba")), &Schedule::linear(3), 30, seed).unwrap();
            let x1 = h.x1.as_ref().unwrap();
            assert!(h.x0.iter().zip(x1).all(|(a, b)| a & b == 0));
        }
    }

    #[test]
    fn result_independent_of_worker_count() {
        let m = markov();
        let run = |workers| {
            monte_carlo(&m, &word("ab"), Some(&word("bb")), &Schedule::bilinear(), 20, 20_000, 42, workers)
                .unwrap()
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(8));
        assert_eq!(one.counts.iter().sum::<u64>(), one.m);
    }

    #[test]
    fn binomial_two_trials() {
        let emp = monte_carlo(&iid(0.5), &word("a"), None, &Schedule::linear(0), 2, 100_000, 1, 4).unwrap();
        let tv = tv_distance(&emp.to_law(), &binomial(2, 0.5)).value;
        assert!(tv <= 0.01, "{tv}");
        assert!((emp.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn injective_schedule_gives_binomial() {
        let n = 20;
        let m = 20_000;
        let emp = monte_carlo(&iid(0.3), &word("a"), None, &Schedule::linear(5), n, m, 3, 4).unwrap();
        let tv = tv_distance(&emp.to_law(), &binomial(n, 0.3)).value;
        assert!(tv <= 2.0 * (n as f64 / m as f64).sqrt(), "{tv}");
    }

    #[test]
    fn sigma_is_geometric_when_probabilities_complement() {
        let emp =
            monte_carlo(&iid(0.7), &word("a"), Some(&word("b")), &Schedule::linear(0), 200, 100_000, 5, 4).unwrap();
        let tv = tv_distance(&emp.to_law(), &DiscreteLaw::geometric(0.3).unwrap()).value;
        assert!(tv <= 0.01, "{tv}");
    }

    #[test]
    fn censored_fraction_matches_product() {
        let (n, m) = (10, 100_000u64);
        let emp = monte_carlo(&iid(0.8), &word("a"), Some(&word("b")), &Schedule::linear(0), n, m, 11, 4).unwrap();
        let p = 0.8f64.powi(n as i32);
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((emp.censored_fraction() - p).abs() <= 3.0 * se, "{} vs {p}", emp.censored_fraction());
        // every censored sample saw all N hits of V
        assert!(emp.counts[n as usize] >= emp.censored_count);
    }

    #[test]
    fn single_sample_is_a_point_mass() {
        let emp = monte_carlo(&markov(), &word("a"), None, &Schedule::linear(0), 8, 1, 0, 1).unwrap();
        let h = evaluate_hits(&markov(), &word("a"), None, &Schedule::linear(0), 8, sample_seed(0, 0)).unwrap();
        let s = summarize_counts(&h).s as usize;
        assert_eq!(emp.to_law(), DiscreteLaw::point(s));
    }

    #[test]
    fn overlapping_targets_rejected_in_geometric_mode() {
        let err = monte_carlo(&iid(0.5), &word("ab"), Some(&word("ab")), &Schedule::linear(0), 5, 10, 0, 1)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition { .. }));
        assert!(err.to_string().contains("for any disjoint sets"));
        assert!(monte_carlo(&iid(0.5), &word("a"), None, &Schedule::linear(0), 5, 0, 0, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let emp = EmpiricalDistribution { counts: vec![1, 3], m: 4, censored_count: 1 };
        let mut buf = Vec::new();
        emp.write_csv(&mut buf, 17).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[..4], ["# censored_count,1", "# M,4", "# seed,17", "value,count,probability"]);
        assert_eq!(lines[4], "0,1,2.5e-1");
        assert_eq!(lines[5], "1,3,7.5e-1");
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(sample_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| sample_seed(42, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }
}
