use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mixret");

const POISSON: &str = r#"
name = "cli-poisson"
mode = "poisson"
n = 20
samples = 3000
master_seed = 4
[model]
kind = "iid"
alphabet = ["a", "b"]
probs = [0.9, 0.1]
[targets.v]
kind = "words"
words = ["b"]
[schedule]
kind = "linear"
offset = 2
"#;

fn mixret(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn success_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POISSON);
    let out = dir.path().join("out");
    let o = mixret(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("lambda = N P(V)             2.00000"), "{report}");
    assert!(report.contains("note: lambda = N*P(V) uses exponent l = 1"));
    for f in ["result.json", "histogram.csv", "exact.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("# censored_count,0\n# M,3000\n# seed,4\nvalue,count,probability\n"), "{hist}");
    let exact = std::fs::read_to_string(out.join("exact.csv")).unwrap();
    assert!(exact.contains("# exact,true"));
}

#[test]
fn seed_and_exact_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POISSON);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(mixret(&["--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let o = mixret(&["--config", &cfg, "--seed", "99", "--no-exact", "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("result.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["master_seed"], 99);
    assert_eq!(json["result"]["exact"]["status"], "skipped");
    assert!(!b.join("exact.csv").exists());
    let ha = std::fs::read(a.join("histogram.csv")).unwrap();
    let hb = std::fs::read(b.join("histogram.csv")).unwrap();
    assert_ne!(ha, hb);
}

#[test]
fn replay_reproduces_histogram_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POISSON);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert!(mixret(&["--config", &cfg, "--workers", "3", "--out", first.to_str().unwrap()]).status.success());
    let json = first.join("result.json");
    let o = mixret(&["--replay", json.to_str().unwrap(), "--workers", "1", "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("histogram.csv")).unwrap(),
        std::fs::read(second.join("histogram.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(first.join("exact.csv")).unwrap(),
        std::fs::read(second.join("exact.csv")).unwrap()
    );
}

#[test]
fn precondition_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = POISSON.replace("mode = \"poisson\"", "mode = \"geometric\"")
        + "[targets.w]\nkind = \"words\"\nwords = [\"b\"]\n";
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = mixret(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("for any disjoint sets"), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", &POISSON.replace("samples = 3000", "samples = \"many\""));
    assert_eq!(mixret(&["--config", &bad]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(mixret(&["--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let not_json = write_config(dir.path(), "r.json", "{");
    assert_eq!(mixret(&["--replay", &not_json]).status.code(), Some(2));
}

#[test]
fn capability_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = POISSON.replace(
        "kind = \"linear\"\noffset = 2",
        "kind = \"polynomial\"\ncoefficients = [0, 0, 1000000000000000000]",
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = mixret(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("overflows"));
}
