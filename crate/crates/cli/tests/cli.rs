use std::path::Path;
use std::process::Command as Proc;

use ocd_cli::{config_hash, run, Command, Format, RunOptions};
use ocd_core::{ForegroundMask, TokenGrid};
use serde_json::{json, Value};

const SMALL_BENCH: &str = r#"{
  "seed": 3,
  "scene": {
    "dims": { "frames": 2, "height": 16, "width": 16 },
    "channels": 4,
    "object": { "size": 6, "start": [5, 5], "velocity": [1, 0] },
    "fg_texture": { "gradient": 2.0, "noise": 0.2 },
    "bg_texture": { "gradient": 1.0, "noise": 0.4 },
    "temporal_noise": 0.05
  },
  "replicates": 3,
  "sweep": { "eta": [1.0, 0.1], "search_mode": ["WTS", "GTS"] }
}"#;

const SMALL_DEMO: &str = r#"{
  "seed": 5,
  "dims": { "frames": 2, "height": 8, "width": 8 },
  "channels": 3,
  "object": { "size": 3, "start": [1, 1], "velocity": [0, 1] },
  "runs": [ { "N": 10, "gamma": 0.3, "phi": 2 }, { "N": 10, "phi": 1 } ]
}"#;

fn ocd(args: &[&str]) -> std::process::Output {
    Proc::new(env!("CARGO_BIN_EXE_ocd")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json_rows(command: Command, config: &str) -> Value {
    let out = run(command, config, Format::Json, &RunOptions::default()).unwrap();
    assert!(out.passed, "{:?}", out.failures);
    serde_json::from_str(&out.text).unwrap()
}

#[test]
fn reports_are_reproducible() {
    for (command, config) in [(Command::MergeBench, SMALL_BENCH), (Command::SampleDemo, SMALL_DEMO)] {
        for format in [Format::Json, Format::Csv] {
            let a = run(command, config, format, &RunOptions::default()).unwrap().text;
            let b = run(command, config, format, &RunOptions::default()).unwrap().text;
            assert_eq!(a, b);
        }
    }
}

#[test]
fn reports_carry_provenance() {
    let report = json_rows(Command::SampleDemo, SMALL_DEMO);
    assert_eq!(report["command"], "sample-demo");
    assert_eq!(report["config_sha256"], config_hash(SMALL_DEMO));
    assert_eq!(report["seed"], 5);
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));

    let csv = run(Command::SampleDemo, SMALL_DEMO, Format::Csv, &RunOptions::default())
        .unwrap()
        .text;
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("config_sha256,seed,version,"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let opts = RunOptions {
        seed: Some(99),
        ..RunOptions::default()
    };
    let a = run(Command::MergeBench, SMALL_BENCH, Format::Json, &opts).unwrap().text;
    let report: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["seed"], 99);
    let b = run(Command::MergeBench, SMALL_BENCH, Format::Json, &RunOptions::default())
        .unwrap()
        .text;
    assert_ne!(a, b);
}

#[test]
fn merge_bench_sweeps_every_cell() {
    let report = json_rows(Command::MergeBench, SMALL_BENCH);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row["per_replicate"].as_array().unwrap().len(), 3);
        assert_eq!(row["tokens"], 512);
    }
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(names.iter().filter(|n| n.starts_with("fg_protection")).count() == 2);
}

#[test]
fn empty_sweep_writes_header_only() {
    let mut cfg: Value = serde_json::from_str(SMALL_BENCH).unwrap();
    cfg["sweep"] = json!({ "eta": [] });
    let out = run(
        Command::MergeBench,
        &cfg.to_string(),
        Format::Csv,
        &RunOptions::default(),
    )
    .unwrap();
    assert!(out.passed);
    assert_eq!(out.text.lines().count(), 1);
    assert!(out.text.starts_with("config_sha256,seed,version,r,eta,"));
}

#[test]
fn sample_demo_recovers_and_matches() {
    let report = json_rows(Command::SampleDemo, SMALL_DEMO);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows[0]["identical_to_standard"], false);
    assert_eq!(rows[1]["identical_to_standard"], true);
    for row in rows {
        assert!(row["object_centric_error"].as_f64().unwrap() < 1e-6);
    }
}

#[test]
fn zero_layer_model_reports_zero_storage() {
    let cfg = json!({
        "model": { "name": "empty", "layers": [], "frames": 8 },
        "cases": [ { "name": "a", "steps": 50 }, { "name": "b", "steps": 20, "kv_keep": "1/8" } ]
    });
    let report = json_rows(Command::CostReport, &cfg.to_string());
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["bytes"], 0);
    }
}

#[test]
fn cost_report_resolves_model_path() {
    let dir = tempfile::tempdir().unwrap();
    let model =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/fatezero_like.json")).unwrap();
    write(dir.path(), "model.json", &model);
    let cfg = write(
        dir.path(),
        "report.json",
        r#"{ "model": "model.json", "cases": [ { "name": "one", "steps": 1 } ],
             "sampling": [ { "name": "skip", "sampler": { "phi": "inf" }, "delta": 0, "total": 4096 } ] }"#,
    );
    let out = ocd(&["cost-report", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"][0]["bytes"], 1_490_821_120u64);
    assert_eq!(report["extra"]["sampling"][0]["report"]["fraction"]["value"], 0.25);
}

#[test]
fn bad_configs_exit_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "unknown.json",
            r#"{ "model": { "name": "m", "layers": [], "frames": 1 }, "colour": 1 }"#,
        ),
        ("syntax.json", "{ not json"),
        (
            "range.json",
            r#"{ "dims": { "frames": 1, "height": 4, "width": 4 }, "channels": 1,
                            "object": { "size": 2, "start": [0, 0], "velocity": [0, 0] },
                            "runs": [ { "gamma": 1.5 } ] }"#,
        ),
    ];
    for (name, text) in cases {
        let path = write(dir.path(), name, text);
        let cmd = if name == "range.json" {
            "sample-demo"
        } else {
            "cost-report"
        };
        let out = ocd(&[cmd, "--config", &path]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(out.stdout.is_empty());
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let out = ocd(&["merge-bench", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_checks_exit_with_one() {
    // Listed in increasing order, so the ordering check fails.
    let dir = tempfile::tempdir().unwrap();
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/fatezero_like.json");
    let cfg = write(
        dir.path(),
        "bad_order.json",
        &json!({ "model": model, "cases": [ { "name": "a", "steps": 20 }, { "name": "b", "steps": 50 } ] }).to_string(),
    );
    let out = ocd(&["cost-report", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly_decreasing"));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn out_flag_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "demo.json", SMALL_DEMO);
    let out_path = dir.path().join("report.csv");
    let dumps = dir.path().join("dumps");
    let out = ocd(&[
        "sample-demo",
        "--config",
        &cfg,
        "--format",
        "csv",
        "--out",
        out_path.to_str().unwrap(),
        "--dump-dir",
        dumps.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&out_path).unwrap().lines().count(), 3);

    let mask = ForegroundMask::from_bytes(&std::fs::read(dumps.join("mask.mask")).unwrap()).unwrap();
    assert_eq!(mask.count(), 2 * 9);
    let z0 = TokenGrid::from_bytes(&std::fs::read(dumps.join("run0_object_centric.grid")).unwrap()).unwrap();
    let mu = TokenGrid::from_bytes(&std::fs::read(dumps.join("mu.grid")).unwrap()).unwrap();
    assert!(z0.max_abs_diff(&mu).unwrap() < 1e-6);

    let bench = write(dir.path(), "bench.json", SMALL_BENCH);
    let out = ocd(&["merge-bench", "--config", &bench, "--dump-dir", dumps.to_str().unwrap()]);
    assert!(out.status.success());
    let pgm = std::fs::read(dumps.join("scene0_frame0.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
}
