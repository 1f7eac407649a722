use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hamrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamrank"))
        .current_dir(dir)
        .args(args)
        .env_remove("HAMRANK_THREADS")
        .env_remove("HAMRANK_MAX_PAIRS")
        .env_remove("HAMRANK_MAX_DIM")
        .env_remove("HAMRANK_MAX_BITS")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report on stdout")
}

#[test]
fn support_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamrank(
        dir.path(),
        &[
            "build-supp",
            "--n",
            "6",
            "--k",
            "2",
            "--seed",
            "7",
            "--out",
            "supp.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["status"], "certified");
    assert_eq!(r["construction"]["dim"], 6);

    let out = hamrank(dir.path(), &["verify-supp", "supp.json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["verification"][0][1]["pairs_checked"], 4096);
    assert_eq!(r["verification"][0][1]["violations"], 0);

    let out = hamrank(dir.path(), &["lower-bound", "supp.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["construction"]["certificate_size"], 4);
}

#[test]
fn csv_summary_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamrank(
        dir.path(),
        &[
            "build-sign",
            "--n",
            "5",
            "--k",
            "1",
            "--csv",
            "s.csv",
            "--report",
            "r.json",
            "--no-timing",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("command,status,n,k,dim,pairs_checked,violations,seed")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..5], ["build-sign", "certified", "5", "1", "41"]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(r.get("timing").is_none());
}

#[test]
fn oversized_domain_needs_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["build-supp", "--n", "8", "--k", "2", "--max-pairs", "1000"];
    let out = hamrank(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["status"], "error");

    let mut sampled = args.to_vec();
    sampled.extend(["--mode", "sample", "--samples", "500"]);
    let out = hamrank(dir.path(), &sampled);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["verification"][0][1]["mode"], "sample(500)");
    assert_eq!(r["verification"][0][1]["pairs_checked"], 500);
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamrank(dir.path(), &["build-supp", "--n", "4", "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hamrank(dir.path(), &["verify-supp", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hamrank(dir.path(), &["compose", "--example-cc-hd", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_rep_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamrank(
        dir.path(),
        &["build-supp", "--n", "5", "--k", "2", "--out", "supp.json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let path = dir.path().join("supp.json");
    let mut file: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let k = file["k"].as_u64().unwrap();
    file["k"] = Value::from(k + 1);
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    let out = hamrank(dir.path(), &["verify-supp", "supp.json"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn composition_from_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamrank(
        dir.path(),
        &["build-rp", "--n", "2", "--k", "2", "--negate", "--out", "inner.json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let spec = serde_json::json!({ "r": 2, "h": [1, 1, 1], "inners": ["inner.json", "inner.json", "inner.json"] });
    std::fs::write(dir.path().join("spec.json"), spec.to_string()).unwrap();
    let out = hamrank(dir.path(), &["compose", "--spec", "spec.json", "--out", "rp.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = hamrank(dir.path(), &["rp-verify", "rp.json", "--against", "semantics"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["verification"][0][1]["pairs_checked"], 4096);
}
