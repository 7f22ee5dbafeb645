//! Black-box checks of the command-line binary: byte-level reproducibility
//! of its outputs, manifest round-trips, and the documented exit codes.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn flexikry(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flexikry"));
    cmd.args(args);
    cmd.env_remove("FLEXIKRY_SEED");
    cmd
}

fn run_ok(args: &[&str]) {
    let out = flexikry(args).output().expect("spawning binary");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

/// Every produced file except the manifest, which embeds a wall-clock stamp.
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("reading output dir") {
        let entry = entry.expect("dir entry");
        let name = entry.file_name().into_string().expect("utf-8 file name");
        if name == "manifest.txt" {
            continue;
        }
        map.insert(name, std::fs::read(entry.path()).expect("reading output file"));
    }
    map
}

fn assert_identical(a: &Path, b: &Path) -> usize {
    let fa = outputs(a);
    let fb = outputs(b);
    let names_a: Vec<_> = fa.keys().collect();
    let names_b: Vec<_> = fb.keys().collect();
    assert_eq!(names_a, names_b, "file sets differ");
    for (name, bytes) in &fa {
        assert_eq!(bytes, &fb[name], "{name} differs between runs");
    }
    fa.len()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let cases: Vec<(&str, Vec<&str>)> = vec![
        (
            "deblur-wavelet",
            vec![
                "deblur-wavelet",
                "--size",
                "16",
                "--levels",
                "2",
                "--iters",
                "6",
                "--solvers",
                "flsqr-g,hybrid-flsqr-g",
                "--seed",
                "3",
            ],
        ),
        (
            "dynamic-deblur",
            vec!["dynamic-deblur", "--iters", "3", "--solvers", "hybrid-flsqr-g", "--seed", "1"],
        ),
        (
            "anomaly",
            vec![
                "anomaly", "--space", "25", "--time", "4", "--obs", "120", "--iters", "8",
                "--seed", "1",
            ],
        ),
    ];
    for (label, args) in &cases {
        let dir_a = tmp.path().join(format!("{label}-a"));
        let dir_b = tmp.path().join(format!("{label}-b"));
        for dir in [&dir_a, &dir_b] {
            let mut full = args.clone();
            let dir_str = dir.to_str().unwrap();
            full.extend_from_slice(&["--out", dir_str]);
            run_ok(&full);
        }
        compared += assert_identical(&dir_a, &dir_b);
    }
    println!(
        "criterion 9: PASS (identical reruns of all 3 commands, {compared} files byte-compared)"
    );
}

#[test]
fn parallel_execution_matches_serial() {
    let tmp = tempfile::tempdir().unwrap();
    let serial = tmp.path().join("serial");
    let parallel = tmp.path().join("parallel");
    let base = [
        "deblur-wavelet",
        "--size",
        "16",
        "--levels",
        "2",
        "--iters",
        "6",
        "--solvers",
        "flsqr-g,hybrid-flsqr-g,hybrid-lsqr",
        "--seed",
        "7",
    ];
    let mut args = base.to_vec();
    args.extend_from_slice(&["--out", serial.to_str().unwrap()]);
    run_ok(&args);
    let mut args = base.to_vec();
    args.extend_from_slice(&["--out", parallel.to_str().unwrap(), "--parallel"]);
    run_ok(&args);
    assert_identical(&serial, &parallel);
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    run_ok(&[
        "deblur-wavelet",
        "--size",
        "16",
        "--levels",
        "2",
        "--iters",
        "6",
        "--solvers",
        "hybrid-flsqr-g,hybrid-flsqr-c",
        "--seed",
        "5",
        "--noise",
        "0.04",
        "--out",
        first.to_str().unwrap(),
    ]);
    let manifest = first.join("manifest.txt");
    let second = tmp.path().join("second");
    run_ok(&[
        "deblur-wavelet",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_identical(&first, &second);
}

#[test]
fn seed_env_fallback_matches_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let by_flag = tmp.path().join("flag");
    run_ok(&[
        "anomaly",
        "--space",
        "25",
        "--time",
        "4",
        "--obs",
        "120",
        "--iters",
        "6",
        "--seed",
        "9",
        "--out",
        by_flag.to_str().unwrap(),
    ]);
    let by_env = tmp.path().join("env");
    let out = flexikry(&[
        "anomaly",
        "--space",
        "25",
        "--time",
        "4",
        "--obs",
        "120",
        "--iters",
        "6",
        "--out",
        by_env.to_str().unwrap(),
    ])
    .env("FLEXIKRY_SEED", "9")
    .output()
    .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_identical(&by_flag, &by_env);
}

#[test]
fn usage_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let out_str = out_dir.to_str().unwrap();

    let cases: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["deblur-wavelet", "--solvers", "no-such-solver", "--out", out_str],
            "unknown solver name",
        ),
        (vec!["deblur-wavelet", "--strategy", "G3", "--out", out_str], "bad strategy"),
        (
            vec!["deblur-wavelet", "--solvers", "hybrid-sd", "--out", out_str],
            "decomposition solver on a problem without priors",
        ),
        (
            vec!["deblur-wavelet", "--size", "15", "--out", out_str],
            "size not divisible by 2^levels",
        ),
        (vec!["anomaly", "--space", "30", "--out", out_str], "non-square cell count"),
        (vec!["anomaly", "--solvers", "hybrid-flsqr", "--out", out_str], "non-decomposition solver"),
    ];
    for (args, what) in &cases {
        let out = flexikry(args).output().unwrap();
        assert_eq!(exit_code(&out), 2, "{what}: {}", String::from_utf8_lossy(&out.stderr));
    }

    let bad_seed = flexikry(&["anomaly", "--space", "25", "--obs", "50", "--out", out_str])
        .env("FLEXIKRY_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(exit_code(&bad_seed), 2, "non-integer seed env");

    let config = tmp.path().join("bad.cfg");
    std::fs::write(&config, "bogus-key = 1\n").unwrap();
    let out = flexikry(&[
        "deblur-wavelet",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_str,
    ])
    .output()
    .unwrap();
    assert_eq!(exit_code(&out), 2, "unknown config key");
}

#[test]
fn expected_files_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("files");
    run_ok(&[
        "deblur-wavelet",
        "--size",
        "16",
        "--levels",
        "2",
        "--iters",
        "5",
        "--solvers",
        "hybrid-flsqr-g",
        "--seed",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    for name in [
        "true.pgm",
        "data.pgm",
        "recon_hybrid-flsqr-g.pgm",
        "errors_hybrid-flsqr-g.csv",
        "lambda_hybrid-flsqr-g.csv",
        "trace_hybrid-flsqr-g.csv",
        "manifest.txt",
    ] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let trace = std::fs::read_to_string(dir.join("trace_hybrid-flsqr-g.csv")).unwrap();
    assert!(trace.starts_with("k,lambda,alpha,proj_residual,full_residual,rel_error,group_norm\n"));
    assert_eq!(trace.lines().count(), 6, "header plus one row per iteration");
    let errors = std::fs::read_to_string(dir.join("errors_hybrid-flsqr-g.csv")).unwrap();
    assert!(errors.starts_with("k,rel_error\n"));
    let lambda = std::fs::read_to_string(dir.join("lambda_hybrid-flsqr-g.csv")).unwrap();
    assert!(lambda.starts_with("k,lambda,alpha\n"));
}
