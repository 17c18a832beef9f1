//! End-to-end tests that spawn the `uav-ids` binary on a synthetic
//! dataset, covering the happy path, error reporting, explicit test-start
//! handling, and byte-identical reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uav_ids_core::synthetic::write_fixture_logs;

const BIN: &str = env!("CARGO_BIN_EXE_uav-ids");

/// Write fixture logs plus a config with optional extra dotted keys, and
/// return the config path.
fn write_demo(dir: &Path, overrides: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let fixture = write_fixture_logs(dir, 7).unwrap();
    let mut config = String::new();
    config.push_str("paths.category_map = \"category_map.csv\"\n");
    config.push_str("paths.annotations = \"annotations.csv\"\n");
    config.push_str("paths.output_dir = \"out\"\n");
    config.push_str(overrides);
    config.push_str("\n[logs]\n");
    for (session, path) in &fixture.logs {
        config.push_str(&format!(
            "{} = {:?}\n",
            session,
            path.file_name().unwrap()
        ));
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_err(out: &Output) -> String {
    assert!(!out.status.success(), "command unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(
        stderr.starts_with("error: ") && stderr.trim_end().lines().count() == 1,
        "expected one `error: ...` line, got: {:?}",
        stderr
    );
    stderr
}

fn parse_key_values(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.to_string(), v.parse().ok()?))
        })
        .collect()
}

/// Every file under `dir`, relative path → bytes.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn full_pipeline_detects_both_attacks_and_spares_the_benign_flight() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), "");

    assert_ok(&run(&config, &["prepare"]));
    let train_out = assert_ok(&run(&config, &["train"]));
    assert!(train_out.contains("model fingerprint"), "{}", train_out);

    for session in ["flood-flight", "drift-flight", "benign-flight"] {
        assert_ok(&run(&config, &["detect", session]));
        let eval = parse_key_values(&assert_ok(&run(&config, &["eval", session])));
        if session == "benign-flight" {
            let fp = eval["false_positives"];
            let n = fp + eval["true_negatives"];
            assert!(fp / n <= 0.05, "benign false-positive rate {}", fp / n);
        } else {
            assert!(eval["recall"] >= 0.9, "{} recall {}", session, eval["recall"]);
            assert!(
                eval["separation"] >= 5.0,
                "{} separation {}",
                session,
                eval["separation"]
            );
        }
    }

    let report = assert_ok(&run(&config, &["report"]));
    let out = dir.path().join("out");
    for name in [
        "catalog.csv",
        "scaler.csv",
        "model.txt",
        "trace.csv",
        "threshold.txt",
        "sessions/flood-flight.csv",
        "split/train.csv",
        "split/validation.csv",
        "detections/drift-flight.csv",
        "eval/benign-flight.txt",
        "report/flood-flight_trace.svg",
        "report/drift-flight_distribution.csv",
    ] {
        assert!(out.join(name).exists(), "missing artifact {}", name);
    }
    assert_eq!(report.lines().count(), 12, "{}", report);
}

#[test]
fn explicit_test_start_is_honored_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), "training.epochs = 3\n");
    assert_ok(&run(&config, &["prepare"]));
    assert_ok(&run(&config, &["train"]));

    // Flood flight runs 15:00:00-15:01:30 with the attack at 15:01:00.
    let out = assert_ok(&run(
        &config,
        &["detect", "flood-flight", "--test-start", "15:00:30"],
    ));
    assert!(out.contains("from index 60"), "{}", out);

    let err = assert_err(&run(
        &config,
        &["detect", "flood-flight", "--test-start", "15:01:05"],
    ));
    assert!(err.contains("not before the attack start"), "{}", err);

    let err = assert_err(&run(
        &config,
        &["detect", "flood-flight", "--test-start", "14:59:00"],
    ));
    assert!(err.contains("before the flight start"), "{}", err);

    let err = assert_err(&run(
        &config,
        &["detect", "flood-flight", "--test-start", "quarter-past"],
    ));
    assert!(err.contains("quarter-past"), "{}", err);
}

#[test]
fn missing_pieces_surface_as_single_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), "");

    // A session with a log file but no annotation row.
    let body = std::fs::read_to_string(&config).unwrap();
    let ghost = body.replace("benign-flight = ", "ghost-flight = ");
    std::fs::write(&config, ghost).unwrap();
    let err = assert_err(&run(&config, &["prepare"]));
    assert!(err.contains("ghost-flight"), "{}", err);
    std::fs::write(&config, body).unwrap();

    // Detecting before preparing/training.
    let err = assert_err(&run(&config, &["detect", "flood-flight"]));
    assert!(err.contains("model.txt"), "{}", err);

    // A session the config does not know.
    assert_ok(&run(&config, &["prepare"]));
    let err = assert_err(&run(&config, &["detect", "mystery-flight"]));
    assert!(err.contains("mystery-flight"), "{}", err);

    // Report before any detection output.
    let err = assert_err(&run(&config, &["report"]));
    assert!(err.contains("detect"), "{}", err);

    // A config file that does not exist.
    let err = assert_err(&run(&dir.path().join("nope.toml"), &["prepare"]));
    assert!(err.contains("nope.toml"), "{}", err);
}

#[test]
fn reruns_into_separate_output_dirs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), "training.epochs = 40\n");
    let out_a = dir.path().join("out-a");
    let out_b = dir.path().join("out-b");

    for out in [&out_a, &out_b] {
        let out = out.to_str().unwrap();
        for args in [
            vec!["--out", out, "prepare"],
            vec!["--out", out, "train"],
            vec!["--out", out, "detect", "flood-flight"],
            vec!["--out", out, "detect", "benign-flight"],
            vec!["--out", out, "eval", "flood-flight"],
            vec!["--out", out, "report"],
        ] {
            assert_ok(&run(&config, &args));
        }
    }

    let a = snapshot(&out_a);
    let b = snapshot(&out_b);
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "artifact sets differ"
    );
    for (path, bytes) in &a {
        assert_eq!(bytes, &b[path], "artifact {} differs between runs", path.display());
    }
    assert!(a.len() >= 14, "expected a full artifact tree, got {}", a.len());
}

#[test]
fn seed_override_changes_stochastic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), "training.epochs = 3\n");
    let out_a = dir.path().join("out-a");
    let out_b = dir.path().join("out-b");

    for (out, seed) in [(&out_a, "1"), (&out_b, "2")] {
        let out = out.to_str().unwrap();
        assert_ok(&run(&config, &["--out", out, "--seed", seed, "prepare"]));
        assert_ok(&run(&config, &["--out", out, "--seed", seed, "train"]));
    }
    let model_a = std::fs::read(out_a.join("model.txt")).unwrap();
    let model_b = std::fs::read(out_b.join("model.txt")).unwrap();
    assert_ne!(model_a, model_b, "different seeds trained identical models");
}
