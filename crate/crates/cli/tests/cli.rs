use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flashopt"))
        .current_dir(root())
        .args(args)
        .output()
        .unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_flashopt"))
        .current_dir(root())
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

/// Structured report with the timing field removed.
fn structured(args: &[&str]) -> (Value, i32) {
    let mut full = vec!["--format", "structured"];
    full.extend(args);
    let out = run(&full);
    let mut v: Value = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    v.as_object_mut().unwrap().remove("wall_time_ms");
    (v, out.status.code().unwrap())
}

fn golden(name: &str, v: &Value) {
    let path: PathBuf = root().join("tests/golden").join(format!("{name}.json"));
    let actual = serde_json::to_string_pretty(v).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected =
        std::fs::read_to_string(&path).expect("golden file; run with UPDATE_GOLDEN=1 to create it");
    assert_eq!(actual, expected, "{name} drifted from its golden file");
}

fn num(v: &Value, path: &[&str]) -> f64 {
    path.iter().fold(v, |v, k| &v[k]).as_f64().unwrap()
}

#[test]
fn optimize_paa() {
    let (v, code) = structured(&[
        "optimize",
        "--scenario",
        "../core/scenarios/paa.json",
        "--vector",
        "paa",
    ]);
    assert_eq!(code, 0);
    assert!(num(&v, &["results", "sqp", "best_objective"]) >= 2_778.94 * 0.995);
    golden("optimize_paa", &v);
}

#[test]
fn optimize_oracle_without_borrow_cap() {
    let (v, code) = structured(&[
        "optimize",
        "--scenario",
        "oracle",
        "--vector",
        "oracle",
        "--ignore-constraint",
        "zY",
    ]);
    assert_eq!(code, 0);
    assert!(num(&v, &["results", "sqp", "best_objective"]) >= 6_323.93 * 0.995);
    golden("optimize_oracle_no_cap", &v);
}

#[test]
fn optimize_oracle_flags_binding_cap() {
    let (v, code) = structured(&[
        "optimize",
        "--scenario",
        "oracle",
        "--vector",
        "oracle",
        "--grid-res",
        "0",
    ]);
    assert_eq!(code, 0);
    let notes = v["results"]["notes"].as_array().unwrap();
    assert!(notes
        .iter()
        .any(|n| n.as_str().unwrap().contains("borrow cap")));
}

#[test]
fn optimize_with_upper_bound() {
    let (v, _) = structured(&[
        "optimize",
        "--scenario",
        "paa",
        "--vector",
        "paa",
        "--upper",
        "p2=1344",
        "--grid-res",
        "0",
    ]);
    let p = v["results"]["sqp"]["best_params"].as_array().unwrap();
    assert!((p[0].as_f64().unwrap() / 2_404.0 - 1.0).abs() < 0.01);
    assert!((p[1].as_f64().unwrap() / 1_344.0 - 1.0).abs() < 0.01);
}

#[test]
fn evaluate_original_attack() {
    let (v, code) = structured(&[
        "evaluate",
        "--scenario",
        "paa",
        "--vector",
        "paa",
        "--params",
        "5500,1300",
    ]);
    assert_eq!(code, 0);
    assert!((num(&v, &["results", "objective"]) / 1_171.70 - 1.0).abs() < 5e-3);
    golden("evaluate_paa_original", &v);
}

#[test]
fn evaluate_zero_params() {
    let (v, code) = structured(&[
        "evaluate",
        "--scenario",
        "oracle",
        "--vector",
        "oracle",
        "--params",
        "0,0,0",
    ]);
    assert_eq!(code, 0);
    assert_eq!(num(&v, &["results", "objective"]), 0.0);
}

#[test]
fn evaluate_text_highlights_violations() {
    let out = run(&[
        "evaluate",
        "--scenario",
        "paa",
        "--vector",
        "paa",
        "--params",
        "9000,1456",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("VIOLATED"));
    let out = run(&[
        "--strict",
        "evaluate",
        "--scenario",
        "paa",
        "--vector",
        "paa",
        "--params",
        "9000,1456",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_optimization_exits_one() {
    let out = run(&[
        "optimize",
        "--scenario",
        "paa",
        "--vector",
        "tests/data/impossible.json",
        "--grid-res",
        "0",
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("no feasible point"));
}

#[test]
fn bad_input_exits_two_without_output() {
    for args in [
        &["optimize", "--scenario", "missing.json", "--vector", "paa"][..],
        &[
            "optimize",
            "--scenario",
            "tests/data/broken.json",
            "--vector",
            "paa",
        ],
        &[
            "evaluate",
            "--scenario",
            "paa",
            "--vector",
            "paa",
            "--params",
            "1",
        ],
        &[
            "optimize",
            "--scenario",
            "paa",
            "--vector",
            "paa",
            "--ignore-constraint",
            "nothing",
        ],
        &[
            "optimize",
            "--scenario",
            "paa",
            "--vector",
            "paa",
            "--oracle-price",
            "min",
        ],
        &["atomicity", "--trace", "tests/data/bad_trace.csv"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn parse_errors_name_the_line() {
    let out = run(&[
        "optimize",
        "--scenario",
        "tests/data/broken.json",
        "--vector",
        "paa",
    ]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 3"));
    let out = run(&["atomicity", "--trace", "tests/data/bad_trace.csv"]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 3"));
}

#[test]
fn atomicity_replay_golden() {
    let (v, code) = structured(&[
        "atomicity",
        "--trace",
        "../core/scenarios/sample_trace.csv",
        "--i",
        "0,10,50,100,250",
        "--trials",
        "300",
    ]);
    assert_eq!(code, 0);
    golden("atomicity_replay", &v);
}

#[test]
fn atomicity_csv_matches_library_golden() {
    let out = run(&[
        "--format",
        "csv",
        "atomicity",
        "--trace",
        "../core/scenarios/sample_trace.csv",
        "--i",
        "0,10,50,100,250",
        "--trials",
        "300",
    ]);
    let golden =
        std::fs::read_to_string(root().join("../core/tests/golden/sample_sweep.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn classify_corpus_golden() {
    let (v, code) = structured(&[
        "classify",
        "--input",
        "../core/tests/data/usage_corpus.jsonl",
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["results"]["total"]["count"], 97);
    golden("classify_corpus", &v);
}

#[test]
fn classify_reads_stdin() {
    let record = r#"{"tx":"t","touched":["0x398eC7346DcD622eDc5ae82352F02bE94C62d119"],"asset":"ETH","amount":3,"gas":7}"#;
    let out = run_stdin(&["--format", "csv", "classify"], &format!("{record}\n"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Others,1,1050.0,7.0,0.0,0"), "{text}");
}

#[test]
fn describe_golden() {
    let (v, code) = structured(&["describe", "--scenario", "paa", "--vector", "paa"]);
    assert_eq!(code, 0);
    assert_eq!(v["results"]["constraints"].as_array().unwrap().len(), 6);
    golden("describe_paa", &v);
}

#[test]
fn runs_are_reproducible() {
    for args in [
        &[
            "optimize",
            "--scenario",
            "oracle",
            "--vector",
            "oracle",
            "--seed",
            "9",
            "--grid-res",
            "20",
        ][..],
        &[
            "atomicity",
            "--trials",
            "100",
            "--i",
            "0,5,50",
            "--seed",
            "4",
        ],
    ] {
        assert_eq!(structured(args), structured(args));
    }
    let a = structured(&[
        "atomicity",
        "--trials",
        "100",
        "--i",
        "0,5,50",
        "--seed",
        "4",
    ])
    .0;
    let b = structured(&[
        "atomicity",
        "--trials",
        "100",
        "--i",
        "0,5,50",
        "--seed",
        "5",
    ])
    .0;
    assert_ne!(a["results"], b["results"]);
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["scenario_hash"], b["scenario_hash"]);
}
