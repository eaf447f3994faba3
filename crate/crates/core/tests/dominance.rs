//! Bound dominance on an instance where the Poisson bound is below 1.

use mixret::config::ExperimentConfig;
use mixret::experiment::{run_experiment, BoundOutcome, ExactOutcome};

const THUE_MORSE_11: &str = r#"
    mode = "poisson"
    n = 4096
    samples = 1000
    master_seed = 7
    [model]
    kind = "iid"
    alphabet = ["a", "b"]
    probs = [0.5, 0.5]
    [targets.v]
    kind = "thue-morse"
    length = 11
    [schedule]
    kind = "linear"
"#;

#[test]
fn exact_tv_below_non_vacuous_poisson_bound() {
    let config = ExperimentConfig::from_toml_str(THUE_MORSE_11, None).unwrap();
    let r = run_experiment(&config).unwrap();
    let ExactOutcome::Computed { tv_exact, pruned_mass, .. } = &r.exact else {
        panic!("oracle skipped: {:?}", r.exact);
    };
    let BoundOutcome::Evaluated { report, .. } = &r.bound else {
        panic!("bound skipped");
    };
    assert!(!report.vacuous);
    assert!(report.total < 1.0);
    assert!(*pruned_mass < 1e-9);
    assert!(tv_exact.value + tv_exact.uncertainty <= report.total, "{tv_exact:?} vs {}", report.total);
}
