//! Exact laws of `S_N` and capped `Σ_N` on small instances.
//!
//! The oracle sums path probabilities over every assignment of the symbols
//! that some scheduled window reads. Positions are visited in increasing
//! order. Paths that agree on everything the remaining windows can observe
//! (the still-needed symbols, the last symbol for Markov sources, and the
//! partial statistic) are merged, which keeps the frontier small without
//! changing any probability. Gaps between observed positions are bridged with
//! `P^gap` for Markov sources and skipped for i.i.d. ones.
//!
//! Window matching here reads the buffer and looks the word up in the target
//! set; it shares no code with the Monte Carlo scanner.

use std::collections::BTreeMap;
use std::io::Write;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cylinder::{are_disjoint, TargetSet};
use crate::error::{Error, Result};
use crate::laws::{tv_distance, DiscreteLaw, TvDistance};
use crate::model::{ModelKind, ProcessModel, Symbol};
use crate::schedule::Schedule;

const MODULE: &str = "exact-oracle";

/// Paths lighter than this are dropped and their mass reported as pruned.
pub const PRUNE_MASS: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationBudget {
    /// Largest number of merged paths alive at once.
    pub max_states: usize,
    /// Largest total number of one-symbol path extensions.
    pub max_work: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_states: 1 << 22, max_work: 1 << 27 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    /// Law of the statistic; any pruned mass is carried as `tail`.
    pub law: DiscreteLaw,
    /// Mass of paths with no scheduled hit of `W` (geometric mode only).
    pub censored_mass: f64,
    pub pruned_mass: f64,
    /// `max_k q_N(k) + max(n, m)`
    pub trajectory_len: u64,
    /// Number of positions actually branched on.
    pub branched_positions: usize,
    pub peak_states: usize,
}

impl ExactLaw {
    pub fn pmf(&self) -> &[f64] {
        match &self.law {
            DiscreteLaw::Explicit { pmf, .. } => pmf,
            _ => unreachable!("oracle laws are explicit"),
        }
    }

    /// Same layout as the Monte Carlo histogram; `count` is left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("exact csv", e);
        writeln!(out, "# exact,true").map_err(io)?;
        writeln!(out, "# censored_mass,{:e}", self.censored_mass).map_err(io)?;
        writeln!(out, "# pruned_mass,{:e}", self.pruned_mass).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::io("exact csv", std::io::Error::other(e));
        w.write_record(["value", "count", "probability"]).map_err(err)?;
        for (v, p) in self.pmf().iter().enumerate() {
            w.write_record([v.to_string(), String::new(), format!("{p:e}")]).map_err(err)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    V,
    W,
}

/// A window `[start, start + len)` that is checked once its last symbol is set.
#[derive(Debug, Clone)]
struct Window {
    which: Which,
    start: u64,
    /// Every `k` with `q_N(k) = start`.
    ks: Vec<u32>,
}

/// What happens at one branched position.
#[derive(Debug, Clone, Default)]
struct Step {
    index: u64,
    closing: Vec<Window>,
    /// Smallest start among windows still open after this step.
    keep_from: u64,
    /// Smallest `k` whose `W` window is still open after this step.
    open_w: u32,
    /// Smallest `k` whose `V` window is still open after this step.
    open_v: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Stat {
    Count(u32),
    /// `settled`: `V` hits certainly before the first `W` hit; `tau`: least
    /// `k` with a `W` hit so far (`N+1` if none); `pending`: `V` hits whose
    /// status still depends on unseen `W` windows.
    Geo { settled: u32, tau: u32, pending: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    /// Symbols at positions `keep_from ..= index` of the last step.
    buf: Vec<Symbol>,
    /// Last symbol drawn (Markov only).
    last: Option<Symbol>,
    stat: Stat,
}

fn plan_steps(v: &TargetSet, w: Option<&TargetSet>, schedule: &Schedule, n: u64) -> Result<Vec<Step>> {
    let mut by_start: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for k in 1..=n {
        by_start.entry(schedule.eval(n, k)?).or_default().push(k as u32);
    }
    let mut windows: Vec<(u64, Window)> = Vec::new();
    for (&start, ks) in &by_start {
        let mut add = |which, len: usize| {
            let end = start
                .checked_add(len as u64 - 1)
                .ok_or_else(|| Error::capability(MODULE, "window end overflows u64"))?;
            windows.push((end, Window { which, start, ks: ks.clone() }));
            Ok::<_, Error>(())
        };
        add(Which::V, v.len())?;
        if let Some(w) = w {
            add(Which::W, w.len())?;
        }
    }
    let mut indices: Vec<u64> = Vec::new();
    for &start in by_start.keys() {
        let len = w.map_or(v.len(), |w| v.len().max(w.len())) as u64;
        let from = indices.last().map_or(start, |&l| start.max(l + 1));
        indices.extend(from..start + len);
    }
    windows.sort_by_key(|(end, _)| *end);
    let mut steps: Vec<Step> = indices.iter().map(|&index| Step { index, ..Default::default() }).collect();
    let mut cursor = 0;
    for (end, win) in windows {
        while steps[cursor].index < end {
            cursor += 1;
        }
        steps[cursor].closing.push(win);
    }
    // suffix minima over windows closing strictly later
    let none = n as u32 + 1;
    let (mut keep, mut open_w, mut open_v) = (u64::MAX, none, none);
    for step in steps.iter_mut().rev() {
        step.keep_from = keep;
        step.open_w = open_w;
        step.open_v = open_v;
        for win in &step.closing {
            keep = keep.min(win.start);
            let kmin = *win.ks.iter().min().unwrap();
            match win.which {
                Which::V => open_v = open_v.min(kmin),
                Which::W => open_w = open_w.min(kmin),
            }
        }
    }
    Ok(steps)
}

/// Exact law of `S_N` (no `W`) or of `Σ_N` capped at `N` (with `W`).
pub fn exact_distribution(
    model: &ProcessModel,
    v: &TargetSet,
    w: Option<&TargetSet>,
    schedule: &Schedule,
    n: u64,
    budget: EnumerationBudget,
) -> Result<ExactLaw> {
    if n == 0 {
        return Err(Error::input(MODULE, "N must be >= 1"));
    }
    if n >= u32::MAX as u64 {
        return Err(Error::capability(MODULE, format!("N={n} is too large to enumerate")));
    }
    model.target_prob(v)?;
    if let Some(w) = w {
        model.target_prob(w)?;
        if !are_disjoint(v, w) {
            return Err(Error::precondition(
                MODULE,
                "geometric mode needs V and W disjoint; the geometric limit is stated for any disjoint sets V, W",
            ));
        }
    }
    let steps = plan_steps(v, w, schedule, n)?;
    let trajectory_len = steps.last().map_or(0, |s| s.index + 1);
    let too_big = |what: String| {
        Error::capability(MODULE, format!("enumeration exceeds its budget ({what}) for trajectory length L={trajectory_len}"))
    };
    let mut work = 0u64;

    let alen = model.alphabet().len();
    let marginal = model.marginal().to_vec();
    let markov = matches!(model.kind(), ModelKind::Markov { .. });
    let mut gap_powers: BTreeMap<u64, DMatrix<f64>> = BTreeMap::new();

    let none = n as u32 + 1;
    let start_stat = if w.is_some() { Stat::Geo { settled: 0, tau: none, pending: Vec::new() } } else { Stat::Count(0) };
    let mut frontier: IndexMap<Key, f64> = IndexMap::new();
    frontier.insert(Key { buf: Vec::new(), last: None, stat: start_stat }, 1.0);

    let mut pmf = vec![0.0; n as usize + 1];
    let mut censored_mass = 0.0;
    let mut pruned_mass = 0.0;
    let mut peak_states = 1usize;
    let mut prev_index: Option<u64> = None;
    // The buffer of every live path covers `buf_start ..= prev_index`; it is
    // nonempty exactly when a still-open window reaches back before the
    // current step, in which case the current index is `prev_index + 1`.
    let mut buf_start = 0u64;

    for step in &steps {
        let trans = match (markov, prev_index) {
            (true, Some(p)) => {
                let gap = step.index - p;
                Some(gap_powers.entry(gap).or_insert_with(|| model.transition_power(gap)).clone())
            }
            _ => None,
        };
        work += (frontier.len() * alen) as u64;
        if work > budget.max_work {
            return Err(too_big(format!("more than {} path extensions", budget.max_work)));
        }
        let mut next: IndexMap<Key, f64> = IndexMap::with_capacity(frontier.len() * alen);
        for (key, mass) in frontier.drain(..) {
            let view_start = if key.buf.is_empty() { step.index } else { buf_start };
            for a in 0..alen as Symbol {
                let p = match (&trans, key.last) {
                    (Some(t), Some(prev)) => t[(prev as usize, a as usize)],
                    _ => marginal[a as usize],
                };
                let pm = mass * p;
                if pm == 0.0 {
                    continue;
                }
                let mut view = key.buf.clone();
                view.push(a);
                let mut stat = key.stat.clone();
                for win in &step.closing {
                    let target = match win.which {
                        Which::V => v,
                        Which::W => w.expect("W windows exist only with W"),
                    };
                    let from = (win.start - view_start) as usize;
                    if target.contains(&view[from..from + target.len()]) {
                        apply_hit(&mut stat, win);
                    }
                }
                if let Stat::Geo { settled, tau, pending } = &mut stat {
                    pending.retain(|&k| k <= *tau);
                    let bar = (*tau).min(step.open_w);
                    let before = pending.len();
                    pending.retain(|&k| k > bar);
                    *settled += (before - pending.len()) as u32;
                    if *tau < none && step.open_w > *tau && step.open_v > *tau {
                        pmf[*settled as usize] += pm;
                        continue;
                    }
                }
                let buf = if step.keep_from <= step.index {
                    view[(step.keep_from - view_start) as usize..].to_vec()
                } else {
                    Vec::new()
                };
                let next_key = Key { buf, last: markov.then_some(a), stat };
                *next.entry(next_key).or_insert(0.0) += pm;
            }
        }
        next.retain(|_, m| {
            if *m < PRUNE_MASS {
                pruned_mass += *m;
                false
            } else {
                true
            }
        });
        if next.len() > budget.max_states {
            return Err(too_big(format!("{} live states, limit {}", next.len(), budget.max_states)));
        }
        peak_states = peak_states.max(next.len());
        frontier = next;
        prev_index = Some(step.index);
        buf_start = step.keep_from;
    }
    for (key, mass) in frontier {
        match key.stat {
            Stat::Count(s) => pmf[s as usize] += mass,
            Stat::Geo { settled, tau, pending } => {
                debug_assert!(pending.is_empty());
                pmf[settled as usize + pending.len()] += mass;
                if tau == none {
                    censored_mass += mass;
                }
            }
        }
    }
    Ok(ExactLaw {
        law: DiscreteLaw::Explicit { pmf, tail: pruned_mass },
        censored_mass,
        pruned_mass,
        trajectory_len,
        branched_positions: steps.len(),
        peak_states,
    })
}

fn apply_hit(stat: &mut Stat, win: &Window) {
    match (stat, win.which) {
        (Stat::Count(s), Which::V) => *s += win.ks.len() as u32,
        (Stat::Count(_), Which::W) => {}
        (Stat::Geo { tau, .. }, Which::W) => *tau = (*tau).min(*win.ks.iter().min().unwrap()),
        (Stat::Geo { pending, .. }, Which::V) => {
            pending.extend(&win.ks);
            pending.sort_unstable();
        }
    }
}

/// Total-variation distance between the exact law and `law`.
pub fn exact_tv(
    model: &ProcessModel,
    v: &TargetSet,
    w: Option<&TargetSet>,
    schedule: &Schedule,
    n: u64,
    law: &DiscreteLaw,
    budget: EnumerationBudget,
) -> Result<TvDistance> {
    let exact = exact_distribution(model, v, w, schedule, n, budget)?;
    let mut tv = tv_distance(&exact.law, law);
    tv.uncertainty += exact.pruned_mass;
    Ok(tv)
}
