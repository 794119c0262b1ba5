use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use moddisc::io::{import_frontier, load_csv, write_csv, Dataset};

fn moddisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moddisc")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn discover_runs_are_reproducible_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = moddisc(&["discover-expr", "--seed", "3", "--epochs", "2", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["frontier.jsonl", "plot.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let text = fs::read_to_string(a.join("frontier.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["objectives", "model_text", "task", "seed", "config_hash"] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
        assert_eq!(v["task"], "expr");
        assert_eq!(v["seed"], 3);
    }
    let plot = fs::read_to_string(a.join("plot.csv")).unwrap();
    assert!(plot.starts_with("objective1,objective2,label\n"));
    assert_eq!(plot.lines().count(), text.lines().count() + 1);
}

#[test]
fn export_plot_rebuilds_the_plot_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(moddisc(&["discover-pde", "--epochs", "3", "--out", path(&run)]).status.success());
    let plot = dir.path().join("plot.csv");
    let o = moddisc(&["export-plot", "--input", path(&run.join("frontier.jsonl")), "--out", path(&plot)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&plot).unwrap(), fs::read(run.join("plot.csv")).unwrap());
    assert!(!import_frontier(&run.join("frontier.jsonl")).unwrap().is_empty());
}

#[test]
fn synthetic_data_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<_> = ["x.csv", "y.csv", "z.csv"].iter().map(|n| dir.path().join(n)).collect();
    for (f, seed) in files.iter().zip(["1", "1", "2"]) {
        assert!(moddisc(&["synth-data", "--seed", seed, "--out", path(f)]).status.success());
    }
    let bytes: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_ne!(bytes[0], bytes[2]);
    assert_eq!(load_csv(&files[0]).unwrap().len(), 2048);
}

#[test]
fn dumped_config_reloads_to_the_same_text() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.toml");
    assert!(moddisc(&["dump-config", "--seed", "9", "--out", path(&first)]).status.success());
    let again = moddisc(&["dump-config", "--config", path(&first)]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), fs::read_to_string(&first).unwrap());
}

#[test]
fn bad_config_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[search]\nepochs = 5\nbogus = 1\n").unwrap();
    let o = moddisc(&["no-such-command"]);
    assert!(!o.status.success());
    let o = moddisc(&["discover-expr", "--config", path(&cfg)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus") && err.contains('3'), "{err}");
}

#[test]
fn missing_output_path_is_an_error() {
    let o = moddisc(&["synth-data"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--out"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(t0 in -100.0f64..100.0, dt in 0.01f64..10.0, u in prop::collection::vec(-1e6f64..1e6, 2..64)) {
        let t: Vec<f64> = (0..u.len()).map(|i| t0 + i as f64 * dt).collect();
        let data = Dataset::new(t, u).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("d.csv");
        write_csv(&data, &f).unwrap();
        prop_assert_eq!(load_csv(&f).unwrap(), data);
    }
}
