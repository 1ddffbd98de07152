use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negface"))
        .args(args)
        .env("NEGFACE_DATA_DIR", dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn setup(dir: &Path, model: &str, seed: &str) {
    ok(dir, &["synth", "--output", "data.csv", "--subjects", "8", "--captures", "3", "--dim", "16", "--seed", "1"]);
    ok(dir, &["train", "--input", "data.csv", "--output", model, "--L", "64", "--enlargement", "random", "--seed", seed]);
}

#[test]
fn theory_prints_the_pmf() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["theory", "--L", "8", "--k", "3", "--D", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "d_prime,probability\n6,0.25\n7,0.5\n8,0.25\n");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["theory", "--L", "8"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["bogus"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--input", "absent.csv", "--output", "m", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_parameters_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["theory", "--L", "8", "--k", "1", "--D", "2"]).status.code(), Some(4));
    assert_eq!(run(dir.path(), &["theory", "--L", "8", "--k", "3", "--D", "9"]).status.code(), Some(4));
}

#[test]
fn enrolled_captures_verify_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "m", "2");
    ok(d, &["enroll", "--input", "data.csv", "--model", "m/model.nenl", "--quantizer", "m/quantizer.nqnt",
        "--output", "g.ngal", "--seed", "3"]);
    assert!(d.join("g.ngal.manifest.json").exists());
    ok(d, &["verify", "--input", "data.csv", "--gallery", "g.ngal", "--model", "m/model.nenl",
        "--quantizer", "m/quantizer.nqnt", "--output", "out.csv", "--threshold", "0.999"]);
    let text = std::fs::read_to_string(d.join("out.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("subject_id,capture_id,score,decision"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 24);
    for row in rows.iter().filter(|r| r[1].ends_with("_c0")) {
        assert_eq!(row[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row[3], "accept");
    }
}

#[test]
fn gallery_from_another_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "m1", "2");
    ok(d, &["train", "--input", "data.csv", "--output", "m2", "--L", "64", "--enlargement", "random", "--seed", "9"]);
    ok(d, &["enroll", "--input", "data.csv", "--model", "m1/model.nenl", "--quantizer", "m1/quantizer.nqnt",
        "--output", "g.ngal", "--seed", "3"]);
    let out = run(d, &["verify", "--input", "data.csv", "--gallery", "g.ngal", "--model", "m2/model.nenl",
        "--quantizer", "m2/quantizer.nqnt", "--output", "out.csv", "--threshold", "0.5"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!d.join("out.csv").exists());
}

#[test]
fn unseeded_runs_record_their_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--output", "a.csv", "--subjects", "4", "--captures", "2", "--dim", "8"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.csv.manifest.json")).unwrap()).unwrap();
    let seed = manifest["seeds"]["synth"].as_u64().expect("recorded seed");
    ok(d, &["synth", "--output", "b.csv", "--subjects", "4", "--captures", "2", "--dim", "8", "--seed",
        &seed.to_string()]);
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
}
