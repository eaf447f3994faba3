//! Orchestration: audit → Monte Carlo → limit laws → bounds → exact oracle.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    choose_r, corollary_conditions, geometric_bound, poisson_bound, BoundReport, ConditionTable, FamilyMember,
    MNRecord, TargetStats, TrendVerdict,
};
use crate::config::ExperimentConfig;
use crate::counting::{monte_carlo, EmpiricalDistribution, Mode};
use crate::cylinder::{return_floors, self_overlap_pi, TargetSet};
use crate::error::{Error, Result};
use crate::laws::{limit_params, tv_distance, DiscreteLaw, LimitParams, TvDistance};
use crate::model::{MixingProfile, ProcessModel};
use crate::oracle::exact_distribution;
use crate::schedule::{audit_schedule, AuditReport, AuditVerdict};

pub const RESULT_SCHEMA: &str = "mixret-result/1";

/// How per-sample seeds derive from the master seed.
pub const SEED_DERIVATION: &str =
    "sample i: ChaCha8 seeded with splitmix64(master_seed + (i+1)*0x9E3779B97F4A7C15)";

pub const ELL_NOTE: &str = "lambda = N*P(V) uses exponent l = 1 on P(V)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub pi_v: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_vw: Option<usize>,
    /// `π(V)` in Poisson mode, `κ_{V,W}` in geometric mode.
    pub floor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Empirical {
    #[serde(flatten)]
    pub hist: EmpiricalDistribution,
    /// `M^{-1/2}`, a rough scale for Monte Carlo noise in TV.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ExactOutcome {
    Computed {
        pmf: Vec<f64>,
        censored_mass: f64,
        pruned_mass: f64,
        peak_states: usize,
        /// exact law vs the limit law
        tv_exact: TvDistance,
        /// Monte Carlo histogram vs the exact law
        tv_empirical_vs_exact: TvDistance,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum BoundOutcome {
    Evaluated {
        report: BoundReport,
        choice: Option<MNRecord>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema: String,
    pub name: String,
    pub mode: Mode,
    pub n: u64,
    pub samples: u64,
    pub master_seed: u64,
    pub seed_derivation: String,
    pub workers: usize,
    pub v_words: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_words: Option<Vec<String>>,
    pub p_v: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_w: Option<f64>,
    pub limit_params: LimitParams,
    pub limit_law: DiscreteLaw,
    pub empirical: Empirical,
    pub tv_empirical: TvDistance,
    pub exact: ExactOutcome,
    pub bound: BoundOutcome,
    pub floors: Floors,
    pub audit: AuditReport,
    pub phi_source: String,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub levels: Vec<usize>,
    pub tv_empirical: Vec<f64>,
    /// Least-squares slope of TV against the level.
    pub slope_tv: f64,
    /// Least-squares slope of ln TV against the level; absent if some TV is 0.
    pub slope_log_tv: Option<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema: String,
    pub name: String,
    pub config: ExperimentConfig,
    pub results: Vec<ExperimentResult>,
    pub conditions: ConditionTable,
    pub convergence: Convergence,
}

/// Output of one invocation: a single run or a sweep, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunOutput {
    Single { config: Box<ExperimentConfig>, result: Box<ExperimentResult> },
    Sweep(Box<SweepResult>),
}

impl RunOutput {
    pub fn config(&self) -> &ExperimentConfig {
        match self {
            RunOutput::Single { config, .. } => config,
            RunOutput::Sweep(s) => &s.config,
        }
    }
}

/// Runs a single-`N` config or a family sweep, whichever the config holds.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    if config.family.is_some() {
        Ok(RunOutput::Sweep(Box::new(sweep(config)?)))
    } else {
        Ok(RunOutput::Single { config: Box::new(config.clone()), result: Box::new(run_experiment(config)?) })
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let n = config
        .n
        .ok_or_else(|| Error::input("cli", "run_experiment needs `n`; use sweep for families"))?;
    let model = config.model.build()?;
    let sep = config.model.separator.as_deref();
    let v = config.targets.v.build(&model, sep, None)?;
    let w = config.targets.w.as_ref().map(|w| w.build(&model, sep, None)).transpose()?;
    let profile = config.model.profile(&model)?;
    run_instance(config, &model, &profile, &v, w.as_ref(), n)
}

fn run_instance(
    config: &ExperimentConfig,
    model: &ProcessModel,
    profile: &MixingProfile,
    v: &TargetSet,
    w: Option<&TargetSet>,
    n: u64,
) -> Result<ExperimentResult> {
    let started = Instant::now();
    let mut warnings: Vec<String> = profile.warnings().to_vec();
    let sep = config.model.separator.as_deref();
    let alphabet = model.alphabet();
    let show = |t: &TargetSet| t.words().iter().map(|x| alphabet.format_word(x, sep)).collect::<Vec<_>>();

    let audit_ns = config.audit_ns.clone().unwrap_or_else(|| vec![n]);
    let audit = audit_schedule(&config.schedule, &audit_ns)?;
    if audit.verdict == AuditVerdict::Fail {
        warnings.push(format!(
            "WARNING: schedule '{}' fails the multiplicity audit (K1/K2 grow with N); collisions can keep \
             the count away from a Poisson or geometric limit",
            config.schedule.name
        ));
    }

    let empirical = monte_carlo(model, v, w, &config.schedule, n, config.samples, config.master_seed, config.workers)?;

    let p_v = model.target_prob(v)?;
    let p_w = w.map(|w| model.target_prob(w)).transpose()?;
    let params = limit_params(p_v, p_w, n)?;
    let limit_law = match config.mode {
        Mode::Poisson => DiscreteLaw::poisson(params.lambda)?,
        Mode::Geometric => DiscreteLaw::geometric(params.rho.expect("geometric mode has W"))?,
    };
    let emp_law = empirical.to_law();
    let tv_empirical = tv_distance(&emp_law, &limit_law);

    let exact = if config.exact {
        match exact_distribution(model, v, w, &config.schedule, n, config.budget) {
            Ok(law) => ExactOutcome::Computed {
                tv_exact: {
                    let mut tv = tv_distance(&law.law, &limit_law);
                    tv.uncertainty += law.pruned_mass;
                    tv
                },
                tv_empirical_vs_exact: tv_distance(&emp_law, &law.law),
                pmf: law.pmf().to_vec(),
                censored_mass: law.censored_mass,
                pruned_mass: law.pruned_mass,
                peak_states: law.peak_states,
            },
            Err(e @ Error::Capability { .. }) => ExactOutcome::Skipped { reason: e.to_string() },
            Err(e) => return Err(e),
        }
    } else {
        ExactOutcome::Skipped { reason: "disabled".into() }
    };

    let floors = match w {
        None => {
            let pi_v = self_overlap_pi(v);
            Floors { pi_v, pi_w: None, pi_vw: None, floor: pi_v }
        }
        Some(w) => {
            let f = return_floors(v, w);
            Floors { pi_v: f.pi_v, pi_w: Some(f.pi_w), pi_vw: Some(f.pi_vw), floor: f.kappa }
        }
    };
    let bound = evaluate_bound(config, model, profile, v, w, n, audit.k, floors.floor)?;

    let mut notes = vec![ELL_NOTE.to_string(), "K = max(K1, K2, 1) over the audited N".to_string()];
    if matches!(bound, BoundOutcome::Evaluated { .. }) {
        notes.push("bounds use the explicit constants of the Chen-Stein estimates".into());
    }
    Ok(ExperimentResult {
        schema: RESULT_SCHEMA.into(),
        name: config.name.clone(),
        mode: config.mode,
        n,
        samples: config.samples,
        master_seed: config.master_seed,
        seed_derivation: SEED_DERIVATION.into(),
        workers: config.workers,
        v_words: show(v),
        w_words: w.map(show),
        p_v,
        p_w,
        limit_params: params,
        limit_law,
        empirical: Empirical { standard_error: 1.0 / (config.samples as f64).sqrt(), hist: empirical },
        tv_empirical,
        exact,
        bound,
        floors,
        audit,
        phi_source: format!("{:?}", profile.source()),
        warnings,
        notes,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_bound(
    config: &ExperimentConfig,
    model: &ProcessModel,
    profile: &MixingProfile,
    v: &TargetSet,
    w: Option<&TargetSet>,
    n: u64,
    k: u64,
    floor: usize,
) -> Result<BoundOutcome> {
    let window = w.map_or(v.len(), |w| v.len().max(w.len())) as u64;
    let (r, choice) = match config.bound_r {
        Some(r) => (r, None),
        None => match choose_r(profile, n, window, config.epsilon) {
            Ok(rec) => (rec.r, Some(rec)),
            Err(e @ Error::Capability { .. }) => return Ok(BoundOutcome::Skipped { reason: e.to_string() }),
            Err(e) => return Err(e),
        },
    };
    let vs = TargetStats::of(model, v)?;
    let mut report = match w {
        None => poisson_bound(&vs, profile, floor, n, r, k)?,
        Some(w) => geometric_bound(&vs, &TargetStats::of(model, w)?, profile, floor, n, r, k)?,
    };
    report.epsilon = choice.map(|c| c.epsilon);
    Ok(BoundOutcome::Evaluated { report, choice })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// One run per family level, the condition table, and a convergence verdict.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let family = config
        .family
        .as_ref()
        .ok_or_else(|| Error::input("cli", "sweep needs a [family] block"))?;
    let levels = family.levels()?;
    if !config.targets.v.is_generator() || config.targets.w.as_ref().is_some_and(|w| !w.is_generator()) {
        return Err(Error::input("cli", "family runs need generated targets"));
    }
    let model = config.model.build()?;
    let profile = config.model.profile(&model)?;
    let sep = config.model.separator.as_deref();
    let mut members = Vec::with_capacity(levels.len());
    let mut results = Vec::with_capacity(levels.len());
    for &level in &levels {
        let v = config.targets.v.build(&model, sep, Some(level))?;
        let w = config.targets.w.as_ref().map(|w| w.build(&model, sep, Some(level))).transpose()?;
        let p_v = model.target_prob(&v)?;
        let p_w = w.as_ref().map(|w| model.target_prob(w)).transpose()?;
        let n = family.n_for(p_v, p_w)?;
        let mut level_config = config.clone();
        level_config.family = None;
        level_config.n = Some(n);
        results.push(run_instance(&level_config, &model, &profile, &v, w.as_ref(), n)?);
        members.push(FamilyMember { v, w, n_count: n });
    }
    let mut conditions = corollary_conditions(&members, &model, &profile, config.epsilon)?;
    for (row, &level) in conditions.rows.iter_mut().zip(&levels) {
        row.level = level;
    }
    let xs: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
    let tv: Vec<f64> = results.iter().map(|r| r.tv_empirical.value).collect();
    let slope_tv = least_squares_slope(&xs, &tv);
    let slope_log_tv = tv
        .iter()
        .all(|&t| t > 0.0)
        .then(|| least_squares_slope(&xs, &tv.iter().map(|t| t.ln()).collect::<Vec<_>>()));
    let violated: Vec<&str> = conditions
        .trends
        .iter()
        .filter(|t| t.verdict == TrendVerdict::Violated)
        .map(|t| t.column.as_str())
        .collect();
    let verdict = if !violated.is_empty() {
        format!("not asserted: conditions violated ({})", violated.join(", "))
    } else if levels.len() < 2 {
        "not asserted: fewer than two levels".to_string()
    } else if slope_log_tv.unwrap_or(slope_tv) < 0.0 {
        "decreasing".to_string()
    } else {
        "not decreasing".to_string()
    };
    Ok(SweepResult {
        schema: RESULT_SCHEMA.into(),
        name: config.name.clone(),
        config: config.clone(),
        results,
        conditions,
        convergence: Convergence { levels, tv_empirical: tv, slope_tv, slope_log_tv, verdict },
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_exact_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    if let ExactOutcome::Computed { pmf, censored_mass, pruned_mass, peak_states, .. } = &result.exact {
        let law = crate::oracle::ExactLaw {
            law: DiscreteLaw::Explicit { pmf: pmf.clone(), tail: *pruned_mass },
            censored_mass: *censored_mass,
            pruned_mass: *pruned_mass,
            trajectory_len: 0,
            branched_positions: 0,
            peak_states: *peak_states,
        };
        law.write_csv(create(path)?)?;
    }
    Ok(())
}

/// Writes `result.json`, histogram CSVs and, for sweeps, `convergence.csv`.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let json_path = dir.join("result.json");
    serde_json::to_writer_pretty(create(&json_path)?, output)
        .map_err(|e| Error::io(json_path.display().to_string(), std::io::Error::other(e)))?;
    match output {
        RunOutput::Single { result, .. } => {
            result.empirical.hist.write_csv(create(&dir.join("histogram.csv"))?, result.master_seed)?;
            write_exact_csv(result, &dir.join("exact.csv"))?;
        }
        RunOutput::Sweep(s) => {
            for (level, r) in s.convergence.levels.iter().zip(&s.results) {
                r.empirical.hist.write_csv(create(&dir.join(format!("histogram_L{level}.csv")))?, r.master_seed)?;
                write_exact_csv(r, &dir.join(format!("exact_L{level}.csv")))?;
            }
            write_convergence_csv(s, create(&dir.join("convergence.csv"))?)?;
        }
    }
    Ok(())
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn write_convergence_csv<W: std::io::Write>(s: &SweepResult, out: W) -> Result<()> {
    let err = |e: csv::Error| Error::io("convergence csv", std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "L", "n", "N", "p_v", "lambda", "tv_empirical", "tv_exact", "bound_total", "vacuous", "n_p_v", "suffix_sum",
        "pi_v", "len_mass", "kappa", "alpha", "ratio", "n_p_w", "second_moment", "gap14", "gap15",
    ])
    .map_err(err)?;
    for ((level, r), row) in s.convergence.levels.iter().zip(&s.results).zip(&s.conditions.rows) {
        let tv_exact = match &r.exact {
            ExactOutcome::Computed { tv_exact, .. } => Some(tv_exact.value),
            ExactOutcome::Skipped { .. } => None,
        };
        let (total, vacuous) = match &r.bound {
            BoundOutcome::Evaluated { report, .. } => (Some(report.total), Some(report.vacuous)),
            BoundOutcome::Skipped { .. } => (None, None),
        };
        w.write_record([
            level.to_string(),
            row.n.to_string(),
            r.n.to_string(),
            r.p_v.to_string(),
            r.limit_params.lambda.to_string(),
            r.tv_empirical.value.to_string(),
            opt(tv_exact),
            opt(total),
            opt(vacuous),
            row.n_p_v.to_string(),
            row.suffix_sum.to_string(),
            row.pi_v.to_string(),
            opt(row.len_mass),
            opt(row.kappa),
            opt(row.alpha),
            opt(row.ratio),
            opt(row.n_p_w),
            opt(row.second_moment),
            opt(row.gap14),
            opt(row.gap15),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("convergence csv", e))
}

/// The config embedded in a result JSON.
pub fn replay_config(json: &str) -> Result<ExperimentConfig> {
    let previous: RunOutput =
        serde_json::from_str(json).map_err(|e| Error::input("cli", format!("cannot read result JSON: {e}")))?;
    Ok(previous.config().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TM8: &str = r#"
        name = "tm8"
        mode = "poisson"
        n = 512
        samples = 4000
        master_seed = 11
        exact = false
        [model]
        kind = "iid"
        alphabet = ["a", "b"]
        probs = [0.5, 0.5]
        [targets.v]
        kind = "thue-morse"
        length = 8
        [schedule]
        kind = "linear"
    "#;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text, None).unwrap()
    }

    #[test]
    fn thue_morse_lambda() {
        let r = run_experiment(&cfg(TM8)).unwrap();
        assert_eq!(r.p_v, 1.0 / 256.0);
        assert_eq!(r.limit_params.lambda, 2.0);
        assert_eq!(r.empirical.hist.m, 4000);
        assert!(matches!(r.exact, ExactOutcome::Skipped { .. }));
        assert!(r.notes.iter().any(|n| n == ELL_NOTE));
        // mean of S_N is exactly (N+1) P(V) for a linear schedule
        assert!((r.empirical.hist.mean() - 513.0 / 256.0).abs() < 0.1);
    }

    #[test]
    fn geometric_needs_disjoint_sets() {
        let text = TM8
            .replace("mode = \"poisson\"", "mode = \"geometric\"")
            .replace("kind = \"thue-morse\"\n        length = 8", "kind = \"words\"\n        words = [\"ab\"]")
            + "\n[targets.w]\nkind = \"words\"\nwords = [\"ab\"]\n";
        let err = run(&cfg(&text)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("for any disjoint sets"), "{err}");
    }

    #[test]
    fn bilinear_schedule_warns_but_runs() {
        let text = TM8
            .replace("n = 512", "n = 64\naudit_ns = [16, 64]")
            .replace("kind = \"linear\"", "kind = \"bilinear\"");
        let r = run_experiment(&cfg(&text)).unwrap();
        assert_eq!(r.audit.verdict, AuditVerdict::Fail);
        assert!(r.warnings.iter().any(|w| w.starts_with("WARNING: schedule")));
        assert_eq!(r.empirical.hist.m, 4000);
    }

    #[test]
    fn exact_law_in_single_run() {
        let text = TM8.replace("n = 512", "n = 40").replace("length = 8", "length = 3").replace("exact = false", "");
        let r = run_experiment(&cfg(&text)).unwrap();
        match &r.exact {
            ExactOutcome::Computed { pmf, tv_empirical_vs_exact, .. } => {
                assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(tv_empirical_vs_exact.value < 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tiny_budget_skips_exact() {
        let text = TM8.replace("exact = false", "budget = { max_states = 4 }");
        let r = run_experiment(&cfg(&text)).unwrap();
        match &r.exact {
            ExactOutcome::Skipped { reason } => assert!(reason.contains("L="), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    const PERIODIC_SWEEP: &str = r#"
        mode = "geometric"
        samples = 2000
        master_seed = 3
        exact = false
        [model]
        kind = "iid"
        alphabet = ["a", "b"]
        probs = [0.5, 0.5]
        [targets.v]
        kind = "periodic"
        pattern = "ab"
        [targets.w]
        kind = "periodic"
        pattern = "ba"
        [schedule]
        kind = "linear"
        [family]
        from = 4
        to = 7
        n_rule = { kind = "fixed", n = 64 }
    "#;

    #[test]
    fn periodic_sweep_flags_kappa() {
        let s = sweep(&cfg(PERIODIC_SWEEP)).unwrap();
        assert_eq!(s.results.len(), 4);
        let kappa = s.conditions.trends.iter().find(|t| t.column == "kappa").unwrap();
        assert_eq!(kappa.verdict, TrendVerdict::Violated);
        assert!(s.convergence.verdict.starts_with("not asserted"), "{}", s.convergence.verdict);
        assert!(s.convergence.verdict.contains("kappa"));
        assert_eq!(s.conditions.rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![4, 5, 6, 7]);
    }

    #[test]
    fn empty_family_range_is_input_error() {
        let text = PERIODIC_SWEEP.replace("to = 7", "to = 3");
        let err = ExperimentConfig::from_toml_str(&text, None).and_then(|c| run(&c)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn replay_reproduces_histograms() {
        let first = run(&cfg(TM8)).unwrap();
        let json = serde_json::to_string(&first).unwrap();
        let again = run(&replay_config(&json).unwrap()).unwrap();
        let hist = |o: &RunOutput| match o {
            RunOutput::Single { result, .. } => result.empirical.hist.clone(),
            RunOutput::Sweep(_) => unreachable!(),
        };
        assert_eq!(hist(&first), hist(&again));
        let back: RunOutput = serde_json::from_str(&json).unwrap();
        assert_eq!(hist(&back), hist(&first));
    }

    #[test]
    fn outputs_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let s = run(&cfg(PERIODIC_SWEEP)).unwrap();
        write_outputs(&s, dir.path()).unwrap();
        for f in ["result.json", "convergence.csv", "histogram_L4.csv", "histogram_L7.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let conv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert_eq!(conv.lines().count(), 5);
        let report = crate::report::emit_report(&s);
        assert!(report.contains(ELL_NOTE));
        assert!(report.contains("verdict: not asserted"));
    }

    #[test]
    fn slope() {
        assert_eq!(least_squares_slope(&[1.0, 2.0, 3.0], &[5.0, 3.0, 1.0]), -2.0);
        assert_eq!(least_squares_slope(&[2.0, 2.0], &[1.0, 3.0]), 0.0);
    }
}
