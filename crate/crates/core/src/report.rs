//! Plain-text summaries. Every real number is printed with six significant digits.

use std::fmt::Write;

use crate::experiment::{BoundOutcome, ExactOutcome, ExperimentResult, RunOutput, SweepResult, ELL_NOTE};

/// `x` with six significant digits; scientific notation outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn single(out: &mut String, r: &ExperimentResult) {
    let _ = writeln!(out, "experiment  {}", if r.name.is_empty() { "(unnamed)" } else { &r.name });
    for w in &r.warnings {
        let _ = writeln!(out, "!! {w}");
    }
    let mode = match r.mode {
        crate::counting::Mode::Poisson => "poisson (S_N)",
        crate::counting::Mode::Geometric => "geometric (Sigma_N capped at N)",
    };
    let _ = writeln!(out, "mode        {mode}");
    let _ = writeln!(out, "N           {}", r.n);
    let _ = writeln!(out, "M           {}   seed {}   workers {}", r.samples, r.master_seed, r.workers);
    let _ = writeln!(out, "V           {}", r.v_words.join(" "));
    if let Some(w) = &r.w_words {
        let _ = writeln!(out, "W           {}", w.join(" "));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<28}value", "quantity");
    let mut row = |name: &str, value: String| {
        let _ = writeln!(out, "{name:<28}{value}");
    };
    row("P(V)", sig6(r.p_v));
    if let Some(p) = r.p_w {
        row("P(W)", sig6(p));
    }
    row("lambda = N P(V)", sig6(r.limit_params.lambda));
    if let Some(rho) = r.limit_params.rho {
        row("rho", sig6(rho));
    }
    if let Some(v) = r.limit_params.varrho {
        row("varrho", sig6(v));
    }
    row("floor (pi or kappa)", r.floors.floor.to_string());
    row("audit K", r.audit.k.to_string());
    row("audit verdict", format!("{:?}", r.audit.verdict).to_lowercase());
    row("empirical mean", sig6(r.empirical.hist.mean()));
    row("censored fraction", sig6(r.empirical.hist.censored_fraction()));
    row("MC standard error", sig6(r.empirical.standard_error));
    row("TV(empirical, limit)", sig6(r.tv_empirical.value));
    match &r.exact {
        ExactOutcome::Computed { tv_exact, tv_empirical_vs_exact, censored_mass, .. } => {
            row("TV(exact, limit)", sig6(tv_exact.value));
            row("TV(empirical, exact)", sig6(tv_empirical_vs_exact.value));
            row("exact censored mass", sig6(*censored_mass));
        }
        ExactOutcome::Skipped { reason } => row("exact law", format!("skipped: {reason}")),
    }
    match &r.bound {
        BoundOutcome::Evaluated { report, choice } => {
            row("bound R", report.r.to_string());
            if let Some(c) = choice {
                row("M_N (epsilon)", format!("{} ({})", c.m_n, sig6(c.epsilon)));
            }
            for (k, v) in &report.terms {
                row(&format!("bound {k}"), sig6(*v));
            }
            row("bound total", sig6(report.total));
            row("bound vacuous", report.vacuous.to_string());
        }
        BoundOutcome::Skipped { reason } => row("bound", format!("skipped: {reason}")),
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "note: {ELL_NOTE}");
    if let BoundOutcome::Evaluated { report, .. } = &r.bound {
        for n in &report.notes {
            let _ = writeln!(out, "note: {n}");
        }
    }
}

fn sweep(out: &mut String, s: &SweepResult) {
    let _ = writeln!(out, "sweep  {}", if s.name.is_empty() { "(unnamed)" } else { &s.name });
    let _ = writeln!(
        out,
        "{:>4} {:>10} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "L", "N", "P(V)", "lambda", "tv_emp", "tv_exact", "bound"
    );
    for (level, r) in s.convergence.levels.iter().zip(&s.results) {
        let tv_exact = match &r.exact {
            ExactOutcome::Computed { tv_exact, .. } => sig6(tv_exact.value),
            ExactOutcome::Skipped { .. } => "-".into(),
        };
        let bound = match &r.bound {
            BoundOutcome::Evaluated { report, .. } => sig6(report.total),
            BoundOutcome::Skipped { .. } => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:>4} {:>10} {:>12} {:>12} {:>12} {:>12} {:>12}",
            level,
            r.n,
            sig6(r.p_v),
            sig6(r.limit_params.lambda),
            sig6(r.tv_empirical.value),
            tv_exact,
            bound
        );
    }
    let _ = writeln!(out);
    for t in &s.conditions.trends {
        let _ = writeln!(
            out,
            "condition {:<14} {:<12} range [{}, {}]",
            t.column,
            format!("{:?}", t.verdict).to_lowercase(),
            sig6(t.min),
            sig6(t.max)
        );
    }
    let c = &s.convergence;
    let log = c.slope_log_tv.map_or_else(|| "-".into(), sig6);
    let _ = writeln!(out, "slope tv {}   slope ln tv {}", sig6(c.slope_tv), log);
    let _ = writeln!(out, "verdict: {}", c.verdict);
    let _ = writeln!(out, "note: {ELL_NOTE}");
}

pub fn emit_report(output: &RunOutput) -> String {
    let mut out = String::new();
    match output {
        RunOutput::Single { result, .. } => single(&mut out, result),
        RunOutput::Sweep(s) => sweep(&mut out, s),
    }
    out
}
