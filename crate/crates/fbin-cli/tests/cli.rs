//! End-to-end tests driving the compiled binary the way a shell user would:
//! every stage reads and writes real files in a scratch directory, and the
//! assertions parse the same JSON reports a pipeline script would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fbin-cli-{}-{name}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fbin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = fbin(args);
    assert!(
        out.status.success(),
        "fbin {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// stderr of a failing run: one JSON object naming the error class.
fn error_kind(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(text.trim())
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"));
    v["kind"].as_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn same_seed_replays_the_identical_byte_stream() {
    let dir = scratch("replay");
    let a = dir.join("a.bin");
    let b = dir.join("b.bin");
    for out in [&a, &b] {
        run_ok(&[
            "simulate",
            "--pairs",
            "20000",
            "--seed",
            "42",
            "--set",
            "window=0.5",
            "--out",
            path_str(out),
        ]);
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same seed must replay byte for byte"
    );

    // The manifest checksums the artifact it just wrote.
    let manifest = json_file(&dir.join("a.bin.manifest.json"));
    assert_eq!(manifest["seed"], 42);
    let sha = manifest["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);

    // A different seed must not replay it.
    let c = dir.join("c.bin");
    run_ok(&[
        "simulate", "--pairs", "20000", "--seed", "43", "--set", "window=0.5", "--out",
        path_str(&c),
    ]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn zero_pairs_still_writes_a_valid_artifact() {
    let dir = scratch("empty");
    let out = dir.join("none.bin");
    run_ok(&[
        "simulate", "--pairs", "0", "--out", path_str(&out), "--csv",
    ]);
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 16, "header-only file for an empty stream");
    assert!(dir.join("none.csv").exists());
}

#[test]
fn histogram_and_certification_pipeline_runs_end_to_end() {
    let dir = scratch("pipeline");
    let tags = dir.join("tags.bin");
    run_ok(&[
        "simulate",
        "--pairs",
        "120000",
        "--seed",
        "7",
        "--set",
        "window=1.2",
        "--out",
        path_str(&tags),
    ]);

    let prefix = dir.join("run");
    run_ok(&[
        "jti",
        "--tags",
        path_str(&tags),
        "--set",
        "window=1.2",
        "--out-prefix",
        path_str(&prefix),
    ]);
    for ext in ["hist.bin", "hist.csv", "diagonal.csv", "antidiagonal.csv", "fit.json"] {
        let artifact = dir.join(format!("run.{ext}"));
        assert!(artifact.exists(), "missing artifact {ext}");
    }
    let fit = json_file(&dir.join("run.fit.json"));
    let v = fit["visibility"]["visibility"]["value"].as_f64().unwrap();
    assert!(v > 0.9, "noiseless visibility fitted at {v}");
    let coherence_time = fit["coherence_time"]["value"].as_f64().unwrap();
    assert!(
        (coherence_time - 581.4e-12).abs() < 30e-12,
        "ringdown fitted at {coherence_time}"
    );

    let report_path = dir.join("cert.json");
    run_ok(&[
        "certify",
        "--tags",
        path_str(&tags),
        "--set",
        "window=1.2",
        "--bootstrap",
        "50",
        "--out",
        path_str(&report_path),
    ]);
    let report = json_file(&report_path);
    let max_s = report["scan"]["max_s"]["value"].as_f64().unwrap();
    assert!(max_s > 2.6, "Bell parameter {max_s} should violate 2");
    assert_eq!(report["steering"]["violated"], true);
    assert_eq!(report["entropy"]["violated"], true);
    let margin = report["entropy_bootstrap"]["sigma_margin"].as_f64().unwrap();
    assert!(margin > 5.0, "entropy margin {margin}σ");
    // Two equatorial bases only: no key-basis block without --z-counts.
    assert!(report["zz"].is_null());
}

#[test]
fn key_rate_chain_consumes_the_certification_report() {
    let dir = scratch("qkd");
    let tags = dir.join("tags.bin");
    run_ok(&[
        "simulate", "--pairs", "100000", "--seed", "11", "--set", "window=1", "--out",
        path_str(&tags),
    ]);
    let zc = dir.join("zcounts.json");
    run_ok(&[
        "simulate", "--pairs", "100000", "--seed", "12", "--set", "window=1", "--basis", "zz",
        "--out", path_str(&zc),
    ]);

    let cert = dir.join("cert.json");
    run_ok(&[
        "certify",
        "--tags",
        path_str(&tags),
        "--set",
        "window=1",
        "--z-counts",
        path_str(&zc),
        "--out",
        path_str(&cert),
    ]);
    let report = json_file(&cert);
    let zz = report["zz"].as_f64().unwrap();
    assert!(zz > 0.5, "corrected key-basis correlator {zz}");
    assert_eq!(report["steering"]["correlators"].as_array().unwrap().len(), 3);

    let qkd = dir.join("qkd.json");
    run_ok(&[
        "qkd",
        "--correlators",
        path_str(&cert),
        "--rate",
        "4100",
        "--out",
        path_str(&qkd),
    ]);
    let rates = json_file(&qkd);
    let qber = rates["qber_z"].as_f64().unwrap();
    let expect = 0.5 * (1.0 - zz);
    assert!((qber - expect).abs() < 1e-12, "QBER {qber} vs (1−E)/2 = {expect}");
    let fraction = rates["secret_fraction"].as_f64().unwrap();
    let rate = rates["secret_rate"].as_f64().unwrap();
    assert!((rate - 4100.0 * fraction).abs() < 1e-9);
}

#[test]
fn tomography_reconstructs_from_fresh_and_replayed_counts() {
    let dir = scratch("tomo");
    let counts = dir.join("counts.json");
    let first = dir.join("tomo.json");
    run_ok(&[
        "tomo",
        "--pairs-per-setting",
        "4000",
        "--slots",
        "8",
        "--seed",
        "3",
        "--set",
        "window=1",
        "--counts-out",
        path_str(&counts),
        "--out",
        path_str(&first),
    ]);
    let report = json_file(&first);
    assert_eq!(report["result"]["converged"], true);
    assert_eq!(report["result"]["monotone"], true);
    let fidelity = report["result"]["fidelity_to_phi_plus"].as_f64().unwrap();
    assert!(fidelity > 0.85, "fidelity {fidelity}");

    // Reconstructing from the saved counts reproduces the estimate exactly.
    let second = dir.join("tomo2.json");
    run_ok(&[
        "tomo",
        "--counts",
        path_str(&counts),
        "--slots",
        "8",
        "--out",
        path_str(&second),
    ]);
    let replay = json_file(&second);
    assert_eq!(
        report["result"]["fidelity_to_phi_plus"],
        replay["result"]["fidelity_to_phi_plus"]
    );
    assert_eq!(report["result"]["rho"], replay["result"]["rho"]);
}

#[test]
fn interferometer_design_solves_evaluates_and_sweeps() {
    let dir = scratch("fwi");
    let design = dir.join("design.cfg");
    let solution = dir.join("solution.json");
    run_ok(&[
        "fwi",
        "solve",
        "--n-glass",
        "1.5007",
        "--air-gap",
        "0.02",
        "--target",
        "0.18314",
        "--double-pass",
        "--out",
        path_str(&design),
        "--json",
        path_str(&solution),
    ]);
    let sol = json_file(&solution);
    let glass = sol["glass_length"].as_f64().unwrap();
    assert!((glass - 0.1097).abs() < 1e-3, "glass length {glass}");
    assert_eq!(sol["widening_coefficient"].as_f64().unwrap(), 0.0);
    let delay = sol["delay"].as_f64().unwrap();
    assert!((delay - 610e-12).abs() < 2e-12, "delay {delay}");

    let eval = dir.join("eval.json");
    run_ok(&[
        "fwi", "eval", "--design", path_str(&design), "--spread", "0.005", "--out",
        path_str(&eval),
    ]);
    let e = json_file(&eval);
    let visibility = e["visibility"].as_f64().unwrap();
    assert!(visibility > 0.5 && visibility < 1.0);

    let sweep = dir.join("sweep.csv");
    run_ok(&[
        "fwi", "sweep", "--design", path_str(&design), "--steps", "5", "--out", path_str(&sweep),
    ]);
    let text = std::fs::read_to_string(&sweep).unwrap();
    assert_eq!(text.lines().count(), 6, "header plus five sweep rows");
    assert!(text.starts_with("alpha,delta_l,visibility"));
}

#[test]
fn failures_exit_with_the_documented_codes() {
    let dir = scratch("errors");

    // Missing input data: exit 3, kind "data".
    let out = fbin(&[
        "jti",
        "--tags",
        path_str(&dir.join("missing.bin")),
        "--out-prefix",
        path_str(&dir.join("x")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "data");

    // Invalid physics parameter: exit 2, kind "config".
    let out = fbin(&[
        "simulate", "--pairs", "10", "--set", "gamma=-3", "--out", path_str(&dir.join("y.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");

    // Misspelled configuration key: exit 2, kind "config".
    let out = fbin(&[
        "simulate", "--pairs", "10", "--set", "tehta=1", "--out", path_str(&dir.join("y.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");

    // Corrupt binary input: exit 3, kind "data".
    let bad = dir.join("bad.bin");
    std::fs::write(&bad, b"NOTATAGS").unwrap();
    let out = fbin(&[
        "jti", "--tags", path_str(&bad), "--out-prefix", path_str(&dir.join("x")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "data");

    // Unknown flags are usage errors: clap exits 2.
    let out = fbin(&["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}
