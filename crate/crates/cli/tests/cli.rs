use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jdet_cli::compare::Table;
use tempfile::TempDir;

fn jdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdet")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn fa_sigma_config(dir: &Path, lambda0: f64, trials: u64, out: &Path) -> PathBuf {
    let body = format!(
        r#"{{
  "kind": "fa_sigma",
  "model": {{"amplitude": 2.0, "reference_width": 4.0, "active": ["width"]}},
  "decision": {{"lambda0": {lambda0}}},
  "grid": {{"lo": 1.1, "hi": 16.0}},
  "montecarlo": {{"n_trials": {trials}, "seed": 1}},
  "compare": {{"min_count": 20}},
  "out": "{}"
}}"#,
        out.display()
    );
    write_config(dir, "fa_sigma.json", &body)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn predict_writes_consistent_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pred");
    let cfg = fa_sigma_config(dir.path(), 10.0, 1000, &out);
    let o = jdet(&["predict", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["pd_curve.csv", "fa_density.csv", "oc.csv", "integrated_fa.csv", "cramer_rao.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let t = Table::read(&out.join("integrated_fa.csv")).unwrap();
    let (i, j) = (t.index(&["integrated_fa"]).unwrap(), t.index(&["tabulated"]).unwrap());
    let row = &t.rows[0];
    assert!((row[j] / row[i] - 1.0).abs() < 0.005, "{row:?}");
    assert!((row[i] / 5.63e-6 - 1.0).abs() < 0.01);

    let fa = Table::read(&out.join("fa_density.csv")).unwrap();
    assert_eq!(fa.rows.len(), 7401);
    let v = fa.column(fa.index(&["v_f"]).unwrap());
    assert!(v.iter().all(|x| *x >= 0.0));
}

#[test]
fn missing_block_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"kind": "fa_sigma", "decision": {"lambda0": 5}, "montecarlo": {"n_trials": 10, "seed": 1}}"#,
    );
    let o = jdet(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model"), "{}", stderr(&o));
}

#[test]
fn zero_trials_and_unknown_fields_are_rejected() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let cfg = fa_sigma_config(dir.path(), 5.0, 0, &out);
    let o = jdet(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let cfg = write_config(
        dir.path(),
        "typo.json",
        r#"{"kind": "fa_sigma", "model": {"amplitude": 2, "widht": 4}}"#,
    );
    let o = jdet(&["predict", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("widht"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn seeded_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = fa_sigma_config(dir.path(), 3.0, 20_000, &a);
    let c = cfg.to_str().unwrap();
    assert!(jdet(&["simulate", "--config", c]).status.success());
    assert!(jdet(&["simulate", "--config", c, "--out", b.to_str().unwrap(), "--workers", "1"]).status.success());
    let stem = "fa_sigma_A-2_lambda0-3_seed-1";
    let hist = format!("{stem}_hist.csv");
    assert_eq!(std::fs::read(a.join(&hist)).unwrap(), std::fs::read(b.join(&hist)).unwrap());
    let summary = |d: &Path| {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(format!("{stem}.json"))).unwrap()).unwrap();
        v["summary"].clone()
    };
    assert_eq!(summary(&a), summary(&b));
    assert!(summary(&a)["over_threshold"].as_u64().unwrap() > 0);
}

#[test]
fn compare_gives_verdicts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = fa_sigma_config(dir.path(), 7.0, 2_000_000, &out);
    let c = cfg.to_str().unwrap();
    assert!(jdet(&["predict", "--config", c]).status.success());
    assert!(jdet(&["simulate", "--config", c]).status.success());
    let theory = out.join("fa_density.csv");
    let sim = out.join("fa_sigma_A-2_lambda0-7_seed-1_hist.csv");

    let o = jdet(&[
        "compare",
        "--theory",
        theory.to_str().unwrap(),
        "--sim",
        sim.to_str().unwrap(),
        "--config",
        c,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: PASS"), "{}", stdout(&o));
    let report = Table::read(&out.join("compare.csv")).unwrap();
    let judged = report.column(report.index(&["judged"]).unwrap());
    assert!(judged.iter().any(|j| *j == 1.0));

    // Doubling the theory must be caught.
    let mut t = Table::read(&theory).unwrap();
    let k = t.index(&["v_f"]).unwrap();
    for row in &mut t.rows {
        row[k] *= 2.0;
    }
    let mut text = t.header.join(",") + "\n";
    for row in &t.rows {
        text += &row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        text.push('\n');
    }
    let doubled = write_config(dir.path(), "doubled.csv", &text);
    let o = jdet(&["compare", "--theory", doubled.to_str().unwrap(), "--sim", sim.to_str().unwrap(), "--config", c]);
    assert!(stdout(&o).contains("verdict: FAIL"), "{}", stdout(&o));

    let strict = write_config(
        dir.path(),
        "strict.json",
        r#"{"kind": "fa_sigma", "decision": {"lambda0": 7}, "compare": {"min_count": 1000000}}"#,
    );
    let o = jdet(&["compare", "--theory", theory.to_str().unwrap(), "--sim", sim.to_str().unwrap(), "--config", strict.to_str().unwrap()]);
    assert!(stdout(&o).contains("verdict: INCONCLUSIVE"), "{}", stdout(&o));
}

#[test]
fn table1_matches_reference_rates() {
    let dir = TempDir::new().unwrap();
    let o = jdet(&["table1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = Table::read(&dir.path().join("table1.csv")).unwrap();
    assert_eq!(t.rows.len(), 10);
    let ratio = t.column(t.index(&["ratio"]).unwrap());
    assert!(ratio.iter().all(|r| (r - 1.0).abs() < 0.01), "{ratio:?}");
}

#[test]
fn csv_round_trips_through_table() {
    let text = jdet_core::prediction::csv_table(&["x", "y"], &[&[1.5, 2.0, 1e-300], &[-3.25e-7, 0.0, 7.0]]);
    let t = Table::parse(&text).unwrap();
    assert_eq!(t.header, ["x", "y"]);
    assert_eq!(t.column(0), [1.5, 2.0, 1e-300]);
    assert_eq!(t.column(1), [-3.25e-7, 0.0, 7.0]);
}
