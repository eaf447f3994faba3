//! Explicit total-variation error bounds for the Poisson and geometric
//! approximations, evaluated with the constants of their Chen–Stein proofs.
//!
//! Poisson (`S_N` against `Pois(N·P(V))`):
//!
//! ```text
//! b1 = 2KRN·P(V)²
//! b2 = 4KN·P(V)·Σ_{r=π(V)}^{R} term(r)
//!      term(r) = φ(⌊r/2⌋+1) + P(T^{n−⌊r/2⌋}V)   r < n
//!              = φ(r−n+1)   + P(V)              r ≥ n
//! b3 = 3N·φ(R−n)
//! ```
//!
//! Geometric (`Σ_N` against `Geo(ρ)`), with `L = n∨m`:
//!
//! ```text
//! b1 = 6KRN(P(V)²+P(W)²)
//! b2 = 4KN(P(V)+P(W))·Σ_{r=κ}^{R} [φ-part(r) + termV(r) + termW(r)]
//! b3 = 6N·φ(R−L)
//! D  = 2b1 + 2b2 + b3 + 2N(P(V)²+P(W)²)
//! total = 2(1−P(W))^N + 2P(W) + 2D
//! ```
//!
//! The cut radius comes from [`choose_r`]: `R = M_N + window`, where
//! `M_N = min{n ≥ 1 : n/γ(n)^ε ≥ N}` and `γ(n) = nφ(n)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::counting::Mode;
use crate::cylinder::{are_disjoint, gap_values, return_floors, self_overlap_pi, shift_target, TargetSet};
use crate::error::{Error, Result};
use crate::model::{MixingProfile, ProcessModel};

const MODULE: &str = "bounds";

/// Largest `M_N` the search will consider.
pub const MN_SEARCH_LIMIT: u64 = 1 << 22;

pub const DEFAULT_EPSILON: f64 = 0.5;

/// Probability data of one target: `P(V)`, its length and the suffix
/// probabilities `P(T^s V)` for `s = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub prob: f64,
    pub len: usize,
    /// `suffix[s] = P(T^s V)`; `suffix[0] = P(V)`, `suffix[n] = 1`.
    pub suffix: Vec<f64>,
    #[serde(skip)]
    target: Option<TargetSet>,
}

impl TargetStats {
    pub fn of(model: &ProcessModel, target: &TargetSet) -> Result<Self> {
        let n = target.len();
        let suffix = (0..=n).map(|s| shift_target(target, s)?.prob(model)).collect::<Result<Vec<_>>>()?;
        Ok(TargetStats { prob: suffix[0], len: n, suffix, target: Some(target.clone()) })
    }

    /// Stats given directly; used to evaluate the formulas without a model.
    pub fn from_values(suffix: Vec<f64>) -> Result<Self> {
        if suffix.len() < 2 || suffix.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input(MODULE, "suffix probabilities must be a list of >= 2 values in [0,1]"));
        }
        Ok(TargetStats { prob: suffix[0], len: suffix.len() - 1, suffix, target: None })
    }

    /// `P(T^s V)`; shifts at or beyond the length give the whole space.
    pub fn shifted(&self, s: usize) -> f64 {
        self.suffix.get(s).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MNRecord {
    pub n: u64,
    pub epsilon: f64,
    pub m_n: u64,
    /// `γ(M_N) = M_N φ(M_N)`
    pub gamma_at_m_n: f64,
    pub window: u64,
    pub r: u64,
}

fn ratio(profile: &MixingProfile, k: u64, epsilon: f64) -> f64 {
    let gamma = k as f64 * profile.phi(k);
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        k as f64 / gamma.powf(epsilon)
    }
}

/// `M_N` and `R = M_N + window`. Since φ is nonincreasing, `n/γ(n)^ε`
/// is increasing, so a doubling search followed by bisection finds `M_N`.
pub fn choose_r(profile: &MixingProfile, n: u64, window: u64, epsilon: f64) -> Result<MNRecord> {
    if n == 0 || window == 0 {
        return Err(Error::input(MODULE, "N and the window must be >= 1"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::input(MODULE, format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let target = n as f64;
    let ok = |k: u64| ratio(profile, k, epsilon) >= target;
    let mut hi = 1u64;
    while !ok(hi) {
        if hi >= MN_SEARCH_LIMIT {
            return Err(Error::capability(
                MODULE,
                format!("M_N exceeds {MN_SEARCH_LIMIT} for N={n}: phi decays too slowly"),
            ));
        }
        hi = (hi * 2).min(MN_SEARCH_LIMIT);
    }
    let mut lo = hi / 2; // ok(lo) is false unless lo == 0
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let m_n = hi;
    let r = m_n
        .checked_add(window)
        .ok_or_else(|| Error::capability(MODULE, "R overflows u64"))?;
    Ok(MNRecord { n, epsilon, m_n, gamma_at_m_n: m_n as f64 * profile.phi(m_n), window, r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mode: Mode,
    pub r: u64,
    pub k: u64,
    /// ε used to choose `R`, when it was chosen by [`choose_r`].
    pub epsilon: Option<f64>,
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
    pub vacuous: bool,
    pub notes: Vec<String>,
}

fn check_common(n_count: u64, r: u64, k: u64, floor: usize, window: usize) -> Result<()> {
    if n_count == 0 || k == 0 || floor == 0 {
        return Err(Error::input(MODULE, "N, K and the return floor must be >= 1"));
    }
    if r <= window as u64 {
        return Err(Error::input(MODULE, format!("R={r} must exceed the window length {window}")));
    }
    Ok(())
}

/// Summand of the Poisson `b2` sum at `r`.
pub fn poisson_summand(v: &TargetStats, phi: &MixingProfile, r: u64) -> f64 {
    let n = v.len as u64;
    if r < n {
        phi.phi(r / 2 + 1) + v.shifted((n - r / 2) as usize)
    } else {
        phi.phi(r - n + 1) + v.prob
    }
}

pub fn poisson_bound(
    v: &TargetStats,
    phi: &MixingProfile,
    pi_v: usize,
    n_count: u64,
    r: u64,
    k: u64,
) -> Result<BoundReport> {
    check_common(n_count, r, k, pi_v, v.len)?;
    let (kf, rf, nf, p) = (k as f64, r as f64, n_count as f64, v.prob);
    let sum: f64 = (pi_v as u64..=r).map(|x| poisson_summand(v, phi, x)).sum();
    let b1 = 2.0 * kf * rf * nf * p * p;
    let b2 = 4.0 * kf * nf * p * sum;
    let b3 = 3.0 * nf * phi.phi(r - v.len as u64);
    let total = b1 + b2 + b3;
    let terms = BTreeMap::from([("b1".to_string(), b1), ("b2".to_string(), b2), ("b3".to_string(), b3)]);
    Ok(BoundReport {
        mode: Mode::Poisson,
        r,
        k,
        epsilon: None,
        terms,
        total,
        vacuous: total >= 1.0,
        notes: vec!["total = b1 + b2 + b3".into()],
    })
}

/// Summand of the geometric `b2` sum at `r`: one shared φ value plus the
/// two suffix probabilities.
pub fn geometric_summand(v: &TargetStats, w: &TargetStats, phi: &MixingProfile, r: u64) -> f64 {
    let side = |t: &TargetStats| {
        let n = t.len as u64;
        if r < n {
            t.shifted((n - r / 2) as usize)
        } else {
            t.prob
        }
    };
    let l = v.len.max(w.len) as u64;
    let phi_part = if r < l { phi.phi(r / 2 + 1) } else { phi.phi(r - l + 1) };
    phi_part + side(v) + side(w)
}

#[allow(clippy::too_many_arguments)]
pub fn geometric_bound(
    v: &TargetStats,
    w: &TargetStats,
    phi: &MixingProfile,
    kappa: usize,
    n_count: u64,
    r: u64,
    k: u64,
) -> Result<BoundReport> {
    if let (Some(a), Some(b)) = (&v.target, &w.target) {
        if !are_disjoint(a, b) {
            return Err(Error::precondition(
                MODULE,
                "geometric bound needs V and W disjoint; it is stated for any disjoint sets V, W",
            ));
        }
    }
    let l = v.len.max(w.len);
    check_common(n_count, r, k, kappa, l)?;
    let (kf, rf, nf) = (k as f64, r as f64, n_count as f64);
    let (pv, pw) = (v.prob, w.prob);
    let sq = pv * pv + pw * pw;
    let sum: f64 = (kappa as u64..=r).map(|x| geometric_summand(v, w, phi, x)).sum();
    let b1 = 6.0 * kf * rf * nf * sq;
    let b2 = 4.0 * kf * nf * (pv + pw) * sum;
    let b3 = 6.0 * nf * phi.phi(r - l as u64);
    let psq = 2.0 * nf * sq;
    let d = 2.0 * b1 + 2.0 * b2 + b3 + psq;
    let a_censor = 2.0 * (1.0 - pw).powf(nf);
    let a4 = 2.0 * pw;
    let total = a_censor + a4 + 2.0 * d;
    let terms = BTreeMap::from([
        ("b1".to_string(), b1),
        ("b2".to_string(), b2),
        ("b3".to_string(), b3),
        ("psq".to_string(), psq),
        ("A-censor".to_string(), a_censor),
        ("A4".to_string(), a4),
    ]);
    Ok(BoundReport {
        mode: Mode::Geometric,
        r,
        k,
        epsilon: None,
        terms,
        total,
        vacuous: total >= 1.0,
        notes: vec![
            "total = A-censor + A4 + 2(2b1 + 2b2 + b3 + psq)".into(),
            "b2 sums r = kappa..R with phi(floor(r/2)+1) below n∨m; the compact form of the sum \
             instead stops at n∨m - 1 with phi(r)"
                .into(),
            "for r >= n∨m the shared phi term uses phi(r - n∨m + 1)".into(),
        ],
    })
}

/// One member of a target family: `V_L`, optional `W_L` and `N_L`.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub v: TargetSet,
    pub w: Option<TargetSet>,
    pub n_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub level: usize,
    pub n: usize,
    pub m: Option<usize>,
    pub n_count: u64,
    pub p_v: f64,
    pub p_w: Option<f64>,
    /// `N_L P(V_L)`
    pub lambda: f64,
    pub pi_v: usize,
    /// `n_L P(V_L)`
    pub n_p_v: f64,
    /// `Σ_{r=π(V)}^{n−1} P(T^{n−r} V)`
    pub suffix_sum: f64,
    pub m_n: u64,
    /// `(n∨m)(P(V)+P(W))`
    pub len_mass: Option<f64>,
    pub kappa: Option<usize>,
    /// `Σ_{r=κ}^{n∨m−1} (P(T^{n∨m−r}V) + P(T^{n∨m−r}W))`
    pub alpha: Option<f64>,
    /// `P(V)/P(W)`
    pub ratio: Option<f64>,
    /// `N P(W)`
    pub n_p_w: Option<f64>,
    /// `N (M_N + n∨m + α) P(W)²`
    pub second_moment: Option<f64>,
    pub gap14: Option<f64>,
    pub gap15: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ToZero,
    ToInfinity,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendVerdict {
    /// Monotone in the required direction with a net change toward the limit.
    Consistent,
    /// Net change toward the limit but with at least one step the wrong way.
    NotMonotone,
    /// No net change toward the limit (e.g. a constant column that should diverge).
    Violated,
    /// Fewer than two levels or missing values.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub column: String,
    pub direction: Direction,
    pub verdict: TrendVerdict,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTable {
    pub rows: Vec<ConditionRow>,
    pub trends: Vec<Trend>,
}

fn trend(column: &str, direction: Direction, values: &[Option<f64>]) -> Option<Trend> {
    if values.iter().all(Option::is_none) {
        return None;
    }
    let vals: Vec<f64> = values.iter().flatten().copied().collect();
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = if vals.len() < 2 || vals.len() != values.len() || vals.iter().any(|v| v.is_nan()) {
        TrendVerdict::Inconclusive
    } else {
        let (first, last) = (vals[0], vals[vals.len() - 1]);
        let steps = || vals.windows(2);
        match direction {
            Direction::ToZero if last >= first => TrendVerdict::Violated,
            Direction::ToZero if steps().all(|p| p[1] <= p[0]) => TrendVerdict::Consistent,
            Direction::ToInfinity if last <= first => TrendVerdict::Violated,
            Direction::ToInfinity if steps().all(|p| p[1] >= p[0]) => TrendVerdict::Consistent,
            Direction::Bounded if min > 0.0 && max.is_finite() => TrendVerdict::Consistent,
            Direction::Bounded => TrendVerdict::Violated,
            _ => TrendVerdict::NotMonotone,
        }
    };
    Some(Trend { column: column.to_string(), direction, verdict, min, max })
}

/// Evaluates the convergence conditions level by level and reports their
/// trends toward the required limits.
pub fn corollary_conditions(
    family: &[FamilyMember],
    model: &ProcessModel,
    phi: &MixingProfile,
    epsilon: f64,
) -> Result<ConditionTable> {
    if family.is_empty() {
        return Err(Error::input(MODULE, "condition table needs a nonempty family"));
    }
    let mut rows = Vec::with_capacity(family.len());
    // υ of the cylinder decay: the smallest υ_k over the lengths seen so far
    let mut upsilon = f64::INFINITY;
    let mut upsilon_len = 0usize;
    for (level, member) in family.iter().enumerate() {
        let vs = TargetStats::of(model, &member.v)?;
        let n = vs.len;
        let pi_v = self_overlap_pi(&member.v);
        let suffix_sum: f64 = (pi_v..n).map(|r| vs.shifted(n - r)).sum();
        let window = member.w.as_ref().map_or(n, |w| n.max(w.len()));
        let m_n = choose_r(phi, member.n_count, window as u64, epsilon)?.m_n;
        let nf = member.n_count as f64;
        let mut row = ConditionRow {
            level,
            n,
            m: None,
            n_count: member.n_count,
            p_v: vs.prob,
            p_w: None,
            lambda: nf * vs.prob,
            pi_v,
            n_p_v: n as f64 * vs.prob,
            suffix_sum,
            m_n,
            len_mass: None,
            kappa: None,
            alpha: None,
            ratio: None,
            n_p_w: None,
            second_moment: None,
            gap14: None,
            gap15: None,
        };
        if let Some(w) = &member.w {
            let ws = TargetStats::of(model, w)?;
            let m = ws.len;
            let l = n.max(m);
            let kappa = return_floors(&member.v, w).kappa;
            let alpha: f64 = (kappa..l).map(|r| vs.shifted(l - r) + ws.shifted(l - r)).sum();
            let short = n.min(m);
            while upsilon_len < short {
                upsilon_len += 1;
                upsilon = upsilon.min(model.max_cylinder_prob(upsilon_len)?.1);
            }
            row.m = Some(m);
            row.p_w = Some(ws.prob);
            row.len_mass = Some(l as f64 * (vs.prob + ws.prob));
            row.kappa = Some(kappa);
            row.alpha = Some(alpha);
            row.ratio = Some(vs.prob / ws.prob);
            row.n_p_w = Some(nf * ws.prob);
            row.second_moment = Some(nf * (m_n as f64 + l as f64 + alpha) * ws.prob * ws.prob);
            if short >= 2 && upsilon > 0.0 && upsilon.is_finite() {
                let (g14, g15) = gap_values(n, m, kappa, upsilon);
                row.gap14 = Some(g14);
                row.gap15 = Some(g15);
            }
        }
        rows.push(row);
    }
    let col = |f: &dyn Fn(&ConditionRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    let geometric = rows[0].m.is_some();
    let mut trends = Vec::new();
    let mut push = |t: Option<Trend>| trends.extend(t);
    if geometric {
        push(trend("len_mass", Direction::ToZero, &col(&|r| r.len_mass)));
        push(trend("kappa", Direction::ToInfinity, &col(&|r| r.kappa.map(|k| k as f64))));
        push(trend("alpha", Direction::ToZero, &col(&|r| r.alpha)));
        push(trend("ratio", Direction::Bounded, &col(&|r| r.ratio)));
        push(trend("n_p_w", Direction::ToInfinity, &col(&|r| r.n_p_w)));
        push(trend("second_moment", Direction::ToZero, &col(&|r| r.second_moment)));
        push(trend("gap14", Direction::ToInfinity, &col(&|r| r.gap14)));
        push(trend("gap15", Direction::ToInfinity, &col(&|r| r.gap15)));
    } else {
        push(trend("n_p_v", Direction::ToZero, &col(&|r| Some(r.n_p_v))));
        push(trend("suffix_sum", Direction::ToZero, &col(&|r| Some(r.suffix_sum))));
        push(trend("lambda", Direction::Bounded, &col(&|r| Some(r.lambda))));
        push(trend("pi_v", Direction::ToInfinity, &col(&|r| Some(r.pi_v as f64))));
    }
    Ok(ConditionTable { rows, trends })
}
