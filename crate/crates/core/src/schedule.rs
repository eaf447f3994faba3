//! Return-time schedules `q_N(k)` and the multiplicity audit.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "schedules";

/// The `N`-dependent shift added to a polynomial schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GFunction {
    #[default]
    Zero,
    /// `g(N) = N`
    N,
    /// `g(N) = ⌊√N⌋`
    Sqrt,
    /// `g(N) = ⌊N/2⌋`
    Half,
}

impl GFunction {
    pub fn eval(self, n: u64) -> u64 {
        match self {
            GFunction::Zero => 0,
            GFunction::N => n,
            GFunction::Sqrt => n.isqrt(),
            GFunction::Half => n / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `q_N(k) = k + offset`
    Linear {
        #[serde(default)]
        offset: u64,
    },
    /// `q_N(k) = r(k) + g(N)`, `r(k) = Σ coefficients[i] kⁱ`
    Polynomial {
        coefficients: Vec<i64>,
        #[serde(default)]
        g: GFunction,
    },
    /// `q_N(k) = k (N − k)`
    Bilinear,
    /// Explicit arrays: `tables[N][k] = q_N(k)` for `k = 0..=N`.
    Table {
        #[serde(with = "string_keys")]
        tables: BTreeMap<u64, Vec<u64>>,
    },
}

// Map keys go through strings so the table survives the flattened, tagged layout.
mod string_keys {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(map: &BTreeMap<u64, Vec<u64>>, ser: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &Vec<u64>> = map.iter().map(|(k, v)| (k.to_string(), v)).collect();
        keyed.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<u64, Vec<u64>>, D::Error> {
        let keyed = BTreeMap::<String, Vec<u64>>::deserialize(de)?;
        keyed
            .into_iter()
            .map(|(k, v)| k.trim().parse::<u64>().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct Schedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    #[serde(default)]
    pub name: String,
}

#[derive(Deserialize)]
struct RawSchedule {
    #[serde(flatten)]
    kind: ScheduleKind,
    #[serde(default)]
    name: String,
}

impl TryFrom<RawSchedule> for Schedule {
    type Error = Error;
    fn try_from(raw: RawSchedule) -> Result<Self> {
        let mut s = Schedule::new(raw.kind)?;
        if !raw.name.is_empty() {
            s.name = raw.name;
        }
        Ok(s)
    }
}

impl Schedule {
    pub fn new(kind: ScheduleKind) -> Result<Self> {
        match &kind {
            ScheduleKind::Polynomial { coefficients, .. } => {
                if coefficients.iter().skip(1).all(|&c| c == 0) {
                    return Err(Error::input(MODULE, "polynomial schedule needs a nonconstant r"));
                }
            }
            ScheduleKind::Table { tables } => {
                for (&n, row) in tables {
                    if row.len() as u64 != n + 1 {
                        return Err(Error::input(
                            MODULE,
                            format!("table for N={n} has {} entries, expected {}", row.len(), n + 1),
                        ));
                    }
                }
            }
            _ => {}
        }
        let name = match &kind {
            ScheduleKind::Linear { offset: 0 } => "q(k)=k".to_string(),
            ScheduleKind::Linear { offset } => format!("q(k)=k+{offset}"),
            ScheduleKind::Polynomial { coefficients, g } => format!("q(k)=r{coefficients:?}(k)+g_{g:?}(N)"),
            ScheduleKind::Bilinear => "q(k)=k(N-k)".to_string(),
            ScheduleKind::Table { tables } => format!("table[{} N values]", tables.len()),
        };
        Ok(Schedule { kind, name })
    }

    pub fn linear(offset: u64) -> Self {
        Schedule::new(ScheduleKind::Linear { offset }).expect("linear schedules are always valid")
    }

    pub fn bilinear() -> Self {
        Schedule::new(ScheduleKind::Bilinear).expect("bilinear schedule is always valid")
    }

    pub fn polynomial(coefficients: Vec<i64>, g: GFunction) -> Result<Self> {
        Schedule::new(ScheduleKind::Polynomial { coefficients, g })
    }

    pub fn table(tables: BTreeMap<u64, Vec<u64>>) -> Result<Self> {
        Schedule::new(ScheduleKind::Table { tables })
    }

    /// `q_N(k)` for `0 ≤ k ≤ N`.
    pub fn eval(&self, n: u64, k: u64) -> Result<u64> {
        if n == 0 {
            return Err(Error::input(MODULE, "N must be >= 1"));
        }
        if k > n {
            return Err(Error::input(MODULE, format!("k={k} outside [0, N={n}]")));
        }
        let overflow = || Error::capability(MODULE, format!("q_N(k) overflows u64 at N={n}, k={k}"));
        match &self.kind {
            ScheduleKind::Linear { offset } => k.checked_add(*offset).ok_or_else(overflow),
            ScheduleKind::Bilinear => k.checked_mul(n - k).ok_or_else(overflow),
            ScheduleKind::Polynomial { coefficients, g } => {
                // Horner in i128 with overflow checks
                let x = k as i128;
                let mut acc: i128 = 0;
                for &c in coefficients.iter().rev() {
                    acc = acc.checked_mul(x).and_then(|v| v.checked_add(c as i128)).ok_or_else(overflow)?;
                }
                if acc < 0 {
                    return Err(Error::input(MODULE, format!("r({k}) = {acc} is negative")));
                }
                u64::try_from(acc)
                    .ok()
                    .and_then(|r| r.checked_add(g.eval(n)))
                    .ok_or_else(overflow)
            }
            ScheduleKind::Table { tables } => tables
                .get(&n)
                .map(|row| row[k as usize])
                .ok_or_else(|| Error::input(MODULE, format!("table schedule has no row for N={n}"))),
        }
    }

    /// `δ_N(k, l) = |q_N(k) − q_N(l)|`.
    pub fn delta(&self, n: u64, k: u64, l: u64) -> Result<u64> {
        Ok(self.eval(n, k)?.abs_diff(self.eval(n, l)?))
    }

    /// `q_N(k)` for `k = 0..=N`.
    pub fn values(&self, n: u64) -> Result<Vec<u64>> {
        (0..=n).map(|k| self.eval(n, k)).collect()
    }

    /// Observation positions `q_N(1), …, q_N(N)` in `k` order.
    pub fn positions(&self, n: u64) -> Result<Vec<u64>> {
        (1..=n).map(|k| self.eval(n, k)).collect()
    }
}

/// Reads a two-column `k,q` CSV describing `q_N(k)` for `k = 0..=N`.
pub fn read_table_csv<R: Read>(reader: R) -> Result<Vec<u64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(MODULE, format!("table csv: {e}")))?;
        let parse = |i: usize| -> Result<u64> {
            rec.get(i)
                .ok_or_else(|| Error::input(MODULE, format!("table csv row {row}: missing column")))?
                .parse::<u64>()
                .map_err(|e| Error::input(MODULE, format!("table csv row {row}: {e}")))
        };
        let (k, q) = (parse(0)?, parse(1)?);
        if k != row as u64 {
            return Err(Error::input(
                MODULE,
                format!("table csv rows must list k = 0, 1, 2, ... in order (found k={k} at row {row})"),
            ));
        }
        out.push(q);
    }
    if out.len() < 2 {
        return Err(Error::input(MODULE, "table csv needs rows for k = 0..=N with N >= 1"));
    }
    Ok(out)
}

pub fn write_table_csv<W: Write>(writer: W, values: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::input(MODULE, format!("table csv: {e}"));
    w.write_record(["k", "q"]).map_err(err)?;
    for (k, q) in values.iter().enumerate() {
        w.write_record([k.to_string(), q.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("table csv", e))?;
    Ok(())
}

/// Multiplicity data for one `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleAudit {
    pub n: u64,
    /// `max_k #{n ∈ [0,N] : q_N(n) = k}`
    pub k1: u64,
    /// ordered pairs `m ≠ n` in `[0,N]²` with `q_N(n) = q_N(m)`
    pub k2: u64,
    /// smallest `n₀` with `q_N` strictly increasing on `[n₀, N]`; `None` when
    /// even the last step `q_N(N−1) < q_N(N)` fails
    pub monotone_tail_n0: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub audits: Vec<ScheduleAudit>,
    pub verdict: AuditVerdict,
    /// Constant passed to the bound evaluation: `max(K1, K2, 1)` over the audited `N`.
    pub k: u64,
}

fn audit_values(n: u64, values: &[u64]) -> ScheduleAudit {
    let mut counts: HashMap<u64, u64> = HashMap::with_capacity(values.len());
    for &q in values {
        *counts.entry(q).or_insert(0) += 1;
    }
    let k1 = counts.values().copied().max().unwrap_or(0);
    let k2 = counts.values().map(|&c| c * (c - 1)).sum();
    let mut n0 = values.len() - 1;
    while n0 > 0 && values[n0 - 1] < values[n0] {
        n0 -= 1;
    }
    let monotone_tail_n0 = (n0 + 1 < values.len()).then_some(n0 as u64);
    ScheduleAudit { n, k1, k2, monotone_tail_n0 }
}

/// Audits `q_N` over `[0, N]` for each requested `N`. Boundedness of the
/// multiplicities is a limit statement, so the verdict is a heuristic:
/// it fails when either count more than doubles (plus 4) from the smallest
/// to the largest audited `N`.
pub fn audit_schedule(schedule: &Schedule, ns: &[u64]) -> Result<AuditReport> {
    if ns.is_empty() {
        return Err(Error::input(MODULE, "audit needs at least one N"));
    }
    let mut audits = Vec::with_capacity(ns.len());
    for &n in ns {
        audits.push(audit_values(n, &schedule.values(n)?));
    }
    let lo = audits.iter().min_by_key(|a| a.n).expect("nonempty");
    let hi = audits.iter().max_by_key(|a| a.n).expect("nonempty");
    let grows = hi.k2 > 2 * lo.k2 + 4 || hi.k1 > 2 * lo.k1 + 4;
    let k = audits.iter().map(|a| a.k1.max(a.k2)).max().unwrap_or(1).max(1);
    Ok(AuditReport {
        verdict: if grows { AuditVerdict::Fail } else { AuditVerdict::Pass },
        audits,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_schedules() -> Vec<Schedule> {
        vec![
            Schedule::linear(0),
            Schedule::linear(3),
            Schedule::bilinear(),
            Schedule::polynomial(vec![0, 0, 1], GFunction::N).unwrap(),
            Schedule::polynomial(vec![6, -5, 1], GFunction::Sqrt).unwrap(),
            Schedule::polynomial(vec![0, 1, 1], GFunction::Half).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Schedule::linear(0).eval(100, 7).unwrap(), 7);
        assert_eq!(Schedule::bilinear().eval(10, 3).unwrap(), 21);
        assert_eq!(Schedule::polynomial(vec![0, 0, 1], GFunction::N).unwrap().eval(10, 3).unwrap(), 19);
        assert!(Schedule::linear(0).eval(10, 11).is_err());
        assert!(Schedule::polynomial(vec![5], GFunction::N).is_err());
        assert!(matches!(
            Schedule::linear(u64::MAX).eval(10, 1),
            Err(Error::Capability { .. })
        ));
        let big = Schedule::polynomial(vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1], GFunction::Zero).unwrap();
        assert!(matches!(big.eval(1 << 20, 1 << 20), Err(Error::Capability { .. })));
        // r(k) = k^2 - 5k + 6 is negative at k = 2.5 only; at integers it is >= 0
        let dip = Schedule::polynomial(vec![6, -5, 1], GFunction::Zero).unwrap();
        assert_eq!(dip.values(4).unwrap(), vec![6, 2, 0, 0, 2]);
        let neg = Schedule::polynomial(vec![-1, 1], GFunction::Zero).unwrap();
        assert!(matches!(neg.eval(5, 0), Err(Error::Input { .. })));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(Schedule::linear(0).delta(20, 5, 9).unwrap(), 4);
        assert_eq!(Schedule::bilinear().delta(10, 1, 9).unwrap(), 0);
        for s in sample_schedules() {
            assert_eq!(s.delta(12, 4, 4).unwrap(), 0);
        }
    }

    #[test]
    fn audit_examples() {
        let lin = audit_schedule(&Schedule::linear(0), &[10, 100, 1000]).unwrap();
        assert!(lin.audits.iter().all(|a| a.k1 == 1 && a.k2 == 0));
        assert_eq!(lin.verdict, AuditVerdict::Pass);
        assert_eq!(lin.k, 1);

        let bil = audit_schedule(&Schedule::bilinear(), &[10]).unwrap();
        assert_eq!(bil.audits[0].k2, 10);
        assert_eq!(bil.audits[0].k1, 2);
        let bil = audit_schedule(&Schedule::bilinear(), &[10, 100, 1000]).unwrap();
        assert_eq!(bil.verdict, AuditVerdict::Fail);

        let poly = Schedule::polynomial(vec![0, 1, 1], GFunction::Sqrt).unwrap();
        let rep = audit_schedule(&poly, &[10, 100]).unwrap();
        assert!(rep.audits.iter().all(|a| a.k1 == 1 && a.k2 == 0));
        assert_eq!(rep.verdict, AuditVerdict::Pass);
    }

    fn naive_audit(values: &[u64]) -> (u64, u64) {
        let mut k1 = 0;
        let mut k2 = 0;
        for (i, a) in values.iter().enumerate() {
            let mut c = 0;
            for (j, b) in values.iter().enumerate() {
                if a == b {
                    c += 1;
                    if i != j {
                        k2 += 1;
                    }
                }
            }
            k1 = k1.max(c);
        }
        (k1, k2)
    }

    #[test]
    fn hashed_audit_matches_naive_double_loop() {
        for s in sample_schedules() {
            for n in [1u64, 2, 7, 64, 333, 2000] {
                let values = s.values(n).unwrap();
                let a = audit_values(n, &values);
                assert_eq!((a.k1, a.k2), naive_audit(&values), "{} N={n}", s.name);
                assert_eq!(a.k2 % 2, 0);
                if let Some(n0) = a.monotone_tail_n0 {
                    assert!(a.k1 <= n0 + 1);
                    assert!(a.k2 <= n0 * n0 + 2 * n0);
                }
            }
        }
    }

    #[test]
    fn neighbourhood_counts_are_bounded_by_k1() {
        for s in sample_schedules() {
            for n in [5u64, 40, 200] {
                let values = s.values(n).unwrap();
                let k1 = audit_values(n, &values).k1;
                for i in 1..=n as usize {
                    let mut by_gap: HashMap<u64, u64> = HashMap::new();
                    for q in &values {
                        *by_gap.entry(values[i].abs_diff(*q)).or_insert(0) += 1;
                    }
                    assert!(by_gap.values().all(|&c| c <= 2 * k1));
                    for r in 1..=50u64 {
                        let ball = (1..=n as usize).filter(|&l| values[l].abs_diff(values[i]) < r).count() as u64;
                        assert!(ball <= n.min(2 * k1 * r), "{} N={n} i={i} R={r}", s.name);
                    }
                }
            }
        }
    }

    #[test]
    fn table_csv_round_trip() {
        let values = Schedule::bilinear().values(12).unwrap();
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &values).unwrap();
        let back = read_table_csv(buf.as_slice()).unwrap();
        assert_eq!(back, values);
        let table = Schedule::table(BTreeMap::from([(12, back)])).unwrap();
        let json = serde_json::to_string(&table).unwrap();
        let parsed: Schedule = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, table);
        assert_eq!(parsed.eval(12, 3).unwrap(), 27);
        assert!(parsed.eval(11, 3).is_err());
        assert!(read_table_csv("k,q\n1,5\n2,6\n".as_bytes()).is_err());
        assert!(Schedule::table(BTreeMap::from([(3, vec![1, 2])])).is_err());
    }
}
