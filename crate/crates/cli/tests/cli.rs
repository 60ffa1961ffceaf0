use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const ORACLE_N1: &str = r#"{
  "label": "oracle n=1",
  "hamiltonian": {"type": "diagonal_quadratic", "n": 1, "a": [0.6283185307179586, 2.199114857512855]},
  "n": 1, "window": 4, "samples": 33, "lambda0": -0.5, "seed": 7
}"#;

fn arnold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arnold"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arnold_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arnold"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_oracle_passes() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.json", ORACLE_N1);
    let out = t.path().join("out");
    let o = arnold(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read(&out.join("families.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["count"], 2);
    assert_eq!(r["label"], "oracle n=1");
    assert!(out.join("certificates.json").exists());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("result: PASS"));
}

#[test]
fn solve_degenerate_warns_with_exit_one() {
    let t = TempDir::new().unwrap();
    // equal coefficients: the critical set at lambda = 0.2 is a whole CP^1
    let cfg = write(
        t.path(),
        "c.json",
        r#"{"hamiltonian": {"type": "diagonal_quadratic", "n": 1, "a": [0.6283185307179586, 0.6283185307179586]},
            "n": 1, "window": 3, "samples": 25, "lambda0": -0.5, "seed": 7, "solver": {"starts": 30}}"#,
    );
    let o = arnold(&[
        "solve",
        "--config",
        s(&cfg),
        "--out",
        s(&t.path().join("o")),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let r = read(&t.path().join("o/families.json"));
    assert!(!r["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn solve_undercount_fails_with_exit_two() {
    let t = TempDir::new().unwrap();
    let cfg = write(
        t.path(),
        "c.json",
        &ORACLE_N1.replace("\"seed\": 7", "\"seed\": 7, \"solver\": {\"starts\": 1}"),
    );
    let o = arnold(&[
        "solve",
        "--config",
        s(&cfg),
        "--out",
        s(&t.path().join("o")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(read(&t.path().join("o/families.json"))["pass"], false);
}

#[test]
fn solve_inadmissible_lambda_names_the_plane() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.json", &ORACLE_N1.replace("-0.5", "-0.8"));
    let o = arnold(&[
        "solve",
        "--config",
        s(&cfg),
        "--out",
        s(&t.path().join("o")),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("plane 0"), "{}", stderr(&o));
}

#[test]
fn solve_config_errors_exit_three() {
    let t = TempDir::new().unwrap();
    let o = arnold(&["solve", "--config", s(&t.path().join("missing.json"))]);
    assert_eq!(code(&o), 3);
    let bad = [
        ORACLE_N1.replace(", \"seed\": 7", ""),
        ORACLE_N1.replace("\"samples\": 33", "\"samples\": 12"),
        ORACLE_N1.replace("\"n\": 1, \"window\"", "\"n\": 2, \"window\""),
        ORACLE_N1.replace("\"seed\": 7", "\"seed\": 7, \"extra\": true"),
        "not json".to_string(),
    ];
    for (i, text) in bad.iter().enumerate() {
        let cfg = write(t.path(), &format!("bad{i}.json"), text);
        let o = arnold(&[
            "solve",
            "--config",
            s(&cfg),
            "--out",
            s(&t.path().join("o")),
        ]);
        assert_eq!(code(&o), 3, "case {i}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"), "case {i}");
    }
}

#[test]
fn hamiltonian_file_is_resolved_next_to_the_config() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "h.json",
        r#"{"type": "diagonal_quadratic", "n": 1, "a": [0.6283185307179586, 2.199114857512855]}"#,
    );
    let cfg = write(
        t.path(),
        "c.json",
        r#"{"hamiltonian": "h.json", "n": 1, "window": 3, "samples": 25, "lambda0": -0.5, "seed": 3}"#,
    );
    let o = arnold(&[
        "solve",
        "--config",
        s(&cfg),
        "--out",
        s(&t.path().join("o")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn argument_errors_exit_three_and_help_exits_zero() {
    assert_eq!(code(&arnold(&["solve"])), 3);
    assert_eq!(code(&arnold(&["frobnicate"])), 3);
    assert_eq!(
        code(&arnold(&["homotopy", "--config", "x", "--step", "7"])),
        3
    );
    assert_eq!(code(&arnold(&["--help"])), 0);
    assert_eq!(code(&arnold(&["--version"])), 0);
}

#[test]
fn bad_thread_count_exits_three() {
    let o = arnold_env(
        &[
            "cuplength",
            "--fixture",
            "1",
            "--inject-count",
            "2",
            "--out",
            "/nonexistent-dir-x",
        ],
        "ARNOLD_THREADS",
        "zero",
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("ARNOLD_THREADS"));
}

#[test]
fn homotopy_step_one_passes() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.json", ORACLE_N1);
    let out = t.path().join("o");
    let o = arnold(&[
        "homotopy",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--step",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read(&out.join("homotopy.json"));
    assert_eq!(r["certificates"][0]["step"], "1");
    assert_eq!(r["certificates"][0]["pass"], true);
}

#[test]
fn homotopy_step_three_reports_block_formula() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.json", ORACLE_N1);
    let out = t.path().join("o");
    let o = arnold(&[
        "homotopy",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--step",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read(&out.join("homotopy.json"));
    let notes = r["certificates"][0]["notes"].as_array().unwrap();
    assert!(
        notes
            .iter()
            .any(|n| n.as_str().unwrap() == "block formula defect 0.000e0"),
        "{notes:?}"
    );
}

#[test]
fn homotopy_c0small_outside_regime_fails() {
    let t = TempDir::new().unwrap();
    let cfg = write(
        t.path(),
        "c.json",
        &ORACLE_N1
            .replace(
                "[0.6283185307179586, 2.199114857512855]",
                "[1.8849555921538759, 1.8849555921538759]",
            )
            .replace("-0.5", "-0.45"),
    );
    let out = t.path().join("o");
    let o = arnold(&[
        "homotopy",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--step",
        "c0small",
        "--window",
        "3",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let r = read(&out.join("homotopy.json"));
    let w = &r["certificates"][0]["witnesses"][0];
    assert!((w["s"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-2);
}

#[test]
fn homotopy_truncation_errors_exit_three() {
    let t = TempDir::new().unwrap();
    let cfg = write(
        t.path(),
        "c.json",
        &ORACLE_N1.replace(
            "\"seed\": 7",
            "\"seed\": 7, \"homotopy\": {\"truncation\": 4}",
        ),
    );
    let o = arnold(&[
        "homotopy",
        "--config",
        s(&cfg),
        "--out",
        s(&t.path().join("o")),
        "--step",
        "2",
    ]);
    assert_eq!(code(&o), 3);
    // N = 0 leaves the large diagonal coefficient outside the truncation
    let cfg = write(
        t.path(),
        "d.json",
        &ORACLE_N1.replace("2.199114857512855", "40.0").replace(
            "\"seed\": 7",
            "\"seed\": 7, \"homotopy\": {\"truncation\": 0}",
        ),
    );
    let o = arnold(&[
        "homotopy",
        "--config",
        s(&cfg),
        "--out",
        s(&t.path().join("o")),
        "--step",
        "2",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("too small"), "{}", stderr(&o));
}

#[test]
fn cuplength_gate_paths() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.json", ORACLE_N1);
    let out = t.path().join("o");
    assert_eq!(
        code(&arnold(&["cuplength", "--fixture", "1", "--out", s(&out)])),
        3
    );
    assert_eq!(
        code(&arnold(&["solve", "--config", s(&cfg), "--out", s(&out)])),
        0
    );
    let o = arnold(&["cuplength", "--fixture", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read(&out.join("cuplength.json"));
    assert_eq!(r["fixture"]["cuplength"], 2);
    assert_eq!(r["suspension"]["suspension_dim"], 16);
    assert_eq!(r["gate"]["pass"], true);
    let o = arnold(&[
        "cuplength",
        "--fixture",
        "1",
        "--out",
        s(&out),
        "--inject-count",
        "1",
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        read(&out.join("cuplength.json"))["count_source"],
        "injected"
    );
    // report for n = 1, fixture for n = 2
    assert_eq!(
        code(&arnold(&["cuplength", "--fixture", "2", "--out", s(&out)])),
        3
    );
    assert_eq!(
        code(&arnold(&[
            "cuplength",
            "--fixture",
            "1",
            "--out",
            s(&out),
            "--window-to",
            "2"
        ])),
        3
    );
}

#[test]
fn cuplength_fixture_file() {
    let t = TempDir::new().unwrap();
    let fixture = r#"{
      "label": "sphere3",
      "ring": {"basis": [{"name": "1", "degree": 0}], "unit": 0, "products": [[0, 0, 0, 1]]},
      "module": {"basis": [{"name": "s", "degree": 3}], "action": [[0, 0, 0, "1/1"]]},
      "expected_cuplength": 1
    }"#;
    let f = write(t.path(), "f.json", fixture);
    let out = t.path().join("o");
    let o = arnold(&[
        "cuplength",
        "--fixture",
        "0",
        "--fixture-file",
        s(&f),
        "--inject-count",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&out.join("cuplength.json"))["fixture"]["cuplength"], 1);
    let bad = write(
        t.path(),
        "g.json",
        &fixture.replace("\"unit\": 0", "\"unit\": 4"),
    );
    let o = arnold(&[
        "cuplength",
        "--fixture",
        "0",
        "--fixture-file",
        s(&bad),
        "--inject-count",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn export_round_trip() {
    let t = TempDir::new().unwrap();
    let cfg = write(
        t.path(),
        "c.json",
        &ORACLE_N1.replace("oracle n=1", "orácle ✓, \\\"n=1\\\""),
    );
    let out = t.path().join("o");
    assert_eq!(code(&arnold(&["export-plots", "--out", s(&out)])), 3);
    assert_eq!(
        code(&arnold(&["solve", "--config", s(&cfg), "--out", s(&out)])),
        0
    );
    assert_eq!(
        code(&arnold(&[
            "homotopy",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--step",
            "1"
        ])),
        0
    );
    let o = arnold(&["export-plots", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut fam = csv::Reader::from_path(out.join("families.csv")).unwrap();
    assert_eq!(
        fam.headers().unwrap(),
        vec!["label", "family", "lambda", "action", "residual"]
    );
    let rows: Vec<csv::StringRecord> = fam.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "orácle ✓, \"n=1\"");
    let report = read(&out.join("families.json"));
    let lambda: f64 = rows[0][2].parse().unwrap();
    assert_eq!(
        lambda.to_bits(),
        report["families"][0]["lambda"].as_f64().unwrap().to_bits()
    );
    assert_eq!(
        rows[0][2]
            .split('e')
            .next()
            .unwrap()
            .trim_start_matches('-')
            .len(),
        18
    );
    let mut cert = csv::Reader::from_path(out.join("certificates.csv")).unwrap();
    assert!(cert.records().count() >= 21);
}

#[test]
fn export_empty_and_single_family_reports() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("o");
    let empty = write(
        t.path(),
        "e.json",
        r#"{"schema_version": 1, "command": "solve", "label": "x", "families": []}"#,
    );
    assert_eq!(
        code(&arnold(&[
            "export-plots",
            "--report",
            s(&empty),
            "--out",
            s(&out)
        ])),
        0
    );
    assert_eq!(
        fs::read_to_string(out.join("families.csv")).unwrap(),
        "label,family,lambda,action,residual\n"
    );
    assert_eq!(
        fs::read_to_string(out.join("certificates.csv")).unwrap(),
        "step,label,s,infimum,pass\n"
    );
    let one = write(
        t.path(),
        "f.json",
        r#"{"schema_version": 1, "command": "solve", "label": "x", "families": [{"lambda": 0.2, "action": -0.5, "residual": 1e-16}]}"#,
    );
    assert_eq!(
        code(&arnold(&[
            "export-plots",
            "--report",
            s(&one),
            "--out",
            s(&out)
        ])),
        0
    );
    let text = fs::read_to_string(out.join("families.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(
        text.contains("x,0,2.0000000000000001e-1,-5.0000000000000000e-1,9.9999999999999998e-17"),
        "{text}"
    );
    let other = write(t.path(), "g.json", r#"{"command": "cuplength"}"#);
    assert_eq!(
        code(&arnold(&[
            "export-plots",
            "--report",
            s(&other),
            "--out",
            s(&out)
        ])),
        3
    );
}

#[test]
fn identical_seeds_give_identical_reports() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.json", ORACLE_N1);
    let strip = |p: &Path| {
        arnold_core::report::value_to_json(&arnold_core::report::without_timings(&read(p)))
    };
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = t.path().join(run);
        assert_eq!(
            code(&arnold(&["solve", "--config", s(&cfg), "--out", s(&out)])),
            0
        );
        assert_eq!(
            code(&arnold(&[
                "homotopy",
                "--config",
                s(&cfg),
                "--out",
                s(&out),
                "--step",
                "2"
            ])),
            0
        );
        reports.push(out);
    }
    for f in ["families.json", "certificates.json", "homotopy.json"] {
        assert_eq!(
            strip(&reports[0].join(f)),
            strip(&reports[1].join(f)),
            "{f}"
        );
    }
    assert_eq!(
        fs::read(reports[0].join("certificates.json")).unwrap(),
        fs::read(reports[1].join("certificates.json")).unwrap()
    );
    let out = t.path().join("c");
    assert_eq!(
        code(&arnold(&[
            "solve",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--seed",
            "8"
        ])),
        0
    );
    assert_ne!(
        strip(&reports[0].join("families.json")),
        strip(&out.join("families.json"))
    );
}
