//! Acceptance check for the command-line pipeline: simulate -> evaluate
//! twice with the same seed produces byte-identical logs and reports, and
//! the exit-code contract {0 deployable, 1 gate failure, 2 error} is
//! exercised on all three branches.

use std::path::{Path, PathBuf};
use std::process::Output;

fn surety() -> &'static str {
    env!("CARGO_BIN_EXE_surety")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(surety())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("surety-accept-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const SIM_SPEC: &str = r#"{
  "generator": {
    "priors": [0.4, 0.6],
    "classes": [
      {"mean": [-1.2, 0.3], "cov_diag": [1.0, 1.0]},
      {"mean": [1.2, -0.3], "cov_diag": [1.0, 1.0]}
    ],
    "label_noise": 0.05,
    "dim": 2
  },
  "n_train": 800,
  "n_eval": 400
}"#;

fn suite_config(threshold: f64) -> String {
    format!(
        r#"{{
  "seed": 11,
  "dataset": {{"path": "eval.jsonl", "schema": "classification"}},
  "cases": [
    {{"name": "error-rate-gate", "slice": "all", "metric": "zero_one",
      "aggregator": "mean", "mode": "aggregate_then_threshold", "threshold": {threshold}}},
    {{"name": "mean-nll", "slice": "all", "metric": "nll",
      "aggregator": "mean", "mode": "aggregate_then_threshold"}}
  ],
  "calibration": [
    {{"task": "ece", "bins": 15}},
    {{"task": "conformal", "alpha": 0.1, "calibration_fraction": 0.5}}
  ],
  "monitors": [
    {{"name": "conf", "metric": "max_prob",
      "detector": {{"kind": "consecutive_rule", "theta": 0.95, "m": 3}}}}
  ]
}}"#
    )
}

/// Criterion: byte-identical outputs for identical (config, seed, inputs)
/// and the full exit-code contract.
#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("criterion 13 ({name}): PASS");
        } else {
            println!("criterion 13 ({name}): FAIL: {detail}");
            failures.push(name.to_string());
        }
    };

    let dir = workdir("pipeline");
    std::fs::write(dir.join("sim.json"), SIM_SPEC).unwrap();
    std::fs::write(dir.join("suite.json"), suite_config(0.5)).unwrap();

    // Two simulate runs with the same seed: identical bytes.
    let s1 = run(&dir, &["simulate", "sim.json", "--out", "eval.jsonl", "--seed", "11", "--quiet"]);
    assert!(s1.status.success(), "simulate failed: {s1:?}");
    let log1 = std::fs::read(dir.join("eval.jsonl")).unwrap();
    let s2 = run(&dir, &["simulate", "sim.json", "--out", "eval_again.jsonl", "--seed", "11", "--quiet"]);
    assert!(s2.status.success());
    let log2 = std::fs::read(dir.join("eval_again.jsonl")).unwrap();
    check(
        "simulate determinism",
        log1 == log2,
        "same seed produced different logs".into(),
    );

    // Two evaluate runs: identical report bytes, exit 0 on the passing gate.
    let e1 = run(&dir, &["evaluate", "suite.json", "--output", "report1.json", "--quiet"]);
    let e2 = run(&dir, &["evaluate", "suite.json", "--output", "report2.json", "--quiet"]);
    check(
        "evaluate exit 0 when deployable",
        e1.status.code() == Some(0) && e2.status.code() == Some(0),
        format!("exit codes {:?} / {:?}", e1.status.code(), e2.status.code()),
    );
    let r1 = std::fs::read(dir.join("report1.json")).unwrap();
    let r2 = std::fs::read(dir.join("report2.json")).unwrap();
    check(
        "evaluate determinism",
        r1 == r2,
        "same config and seed produced different reports".into(),
    );

    // A markdown summary relabels the same run.
    let md = std::fs::read_to_string(dir.join("report1.md")).unwrap();
    check(
        "markdown summary",
        md.contains("## Satisficing tests") && md.contains("## Optimizing tests"),
        format!("summary missing tables:\n{md}"),
    );

    // Provenance: the recorded config hash is the documented digest —
    // 64-bit FNV-1a over the config re-serialized with sorted keys and
    // no whitespace — recomputed here independently.
    let report: serde_json::Value = serde_json::from_slice(&r1).unwrap();
    let config_value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("suite.json")).unwrap()).unwrap();
    let canonical = serde_json::to_string(&config_value).unwrap(); // BTreeMap keys: sorted, compact
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in canonical.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let expected_hash = format!("fnv1a64:{hash:016x}");
    check(
        "config hash is the documented digest",
        report["provenance"]["config_hash"] == serde_json::Value::String(expected_hash.clone()),
        format!(
            "report has {}, recomputed {expected_hash}",
            report["provenance"]["config_hash"]
        ),
    );

    // Exit 1: the same dataset cannot pass an impossibly strict gate.
    std::fs::write(dir.join("strict.json"), suite_config(0.000001)).unwrap();
    let failing = run(&dir, &["evaluate", "strict.json", "--quiet", "--output", "failing.json"]);
    check(
        "evaluate exit 1 on gate failure",
        failing.status.code() == Some(1),
        format!("exit {:?}", failing.status.code()),
    );
    let failing_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("failing.json")).unwrap()).unwrap();
    check(
        "failing case is named in the report",
        failing_report["suite"]["outcomes"][0]["case"] == "error-rate-gate"
            && failing_report["suite"]["outcomes"][0]["verdict"] == "fail",
        format!("{failing_report}"),
    );

    // Exit 2: missing dataset file, reported before any work.
    std::fs::write(
        dir.join("broken.json"),
        suite_config(0.5).replace("eval.jsonl", "missing.jsonl"),
    )
    .unwrap();
    let broken = run(&dir, &["evaluate", "broken.json", "--quiet"]);
    check(
        "evaluate exit 2 on config error",
        broken.status.code() == Some(2),
        format!("exit {:?}", broken.status.code()),
    );

    // Monitor replay on the 0.95/3 fixture writes exactly one
    // consecutive-rule event at index 3.
    let fixture_dir = workdir("monitor");
    let mut log = String::from("{\"schema\":\"classification\",\"version\":1}\n");
    for (i, conf) in [0.99f64, 0.90, 0.90, 0.90].iter().enumerate() {
        log.push_str(&format!(
            "{{\"id\":\"f{i}\",\"index\":{i},\"payload\":{{\"kind\":\"classification\",\"label\":0,\"probs\":[{conf},{}]}}}}\n",
            1.0 - conf
        ));
    }
    std::fs::write(fixture_dir.join("frames.jsonl"), log).unwrap();
    std::fs::write(
        fixture_dir.join("monitor.json"),
        r#"{"name": "confidence", "metric": "max_prob",
            "detector": {"kind": "consecutive_rule", "theta": 0.95, "m": 3}}"#,
    )
    .unwrap();
    let m = run(
        &fixture_dir,
        &["monitor", "monitor.json", "--log", "frames.jsonl", "--event-log", "events.jsonl", "--quiet"],
    );
    assert!(m.status.success(), "{m:?}");
    let events = std::fs::read_to_string(fixture_dir.join("events.jsonl")).unwrap();
    let lines: Vec<&str> = events.lines().collect();
    let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    check(
        "monitor replay event",
        lines.len() == 1 && parsed["index"] == 3 && parsed["kind"] == "consecutive_rule",
        format!("event log: {events}"),
    );

    // Shift subcommand: self-vs-self label shift gives unit weights.
    let shift = run(
        &dir,
        &["shift", "eval.jsonl", "eval.jsonl", "--task", "label-shift", "--output", "shift.json", "--quiet"],
    );
    assert!(shift.status.success(), "{shift:?}");
    let shift_out: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(dir.join("shift.json")).unwrap().lines().next().unwrap())
            .unwrap();
    let weights = shift_out["weights"].as_array().unwrap();
    check(
        "self-shift unit weights",
        weights
            .iter()
            .all(|w| (w.as_f64().unwrap() - 1.0).abs() < 1e-9),
        format!("weights {weights:?}"),
    );

    std::fs::remove_dir_all(&dir).ok();
    std::fs::remove_dir_all(&fixture_dir).ok();
    assert!(failures.is_empty(), "criterion 13 failed: {failures:?}");
}
