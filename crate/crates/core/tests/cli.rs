use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use polyfact::cli::{parse_factorization_in, parse_poly};
use polyfact::polycore::fact_distance;
use serde_json::Value;

fn polyfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyfact")).args(args).output().unwrap()
}

fn polyfact_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_polyfact"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn schema() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(doc: &Value) {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

const SAMPLE: &str = "-4 - 12*x*y + x^3*y^2*z + 3*x^4*y^3*z + 8*z^3 - 2*x^3*y^2*z^4";

#[test]
fn difference_of_squares_as_json() {
    let o = polyfact(&["x^2 - 1", "--tol", "1e-10", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&doc);
    let factors = doc["factors"].as_array().unwrap();
    assert_eq!(factors.len(), 2);
    for f in factors {
        assert_eq!(f["multiplicity"], 1);
        assert_eq!(parse_poly(f["poly"].as_str().unwrap()).unwrap().degree().total(), 1);
    }
    assert!(doc["backward_error"].as_f64().unwrap() <= 1e-14);
    assert_eq!(doc["seed"], 0);
}

#[test]
fn unbalanced_parenthesis_is_a_parse_error() {
    let o = polyfact(&["(", "--tol", "1e-8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
}

#[test]
fn missing_tolerance_is_rejected() {
    let o = polyfact(&["x^2 - 1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tolerance_below_roundoff_fails_factorization() {
    let o = polyfact(&["x^2 - 1", "--tol", "1e-300"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("polyfact:"));
}

#[test]
fn three_variable_sample_matches_published_answer() {
    let o = polyfact(&[SAMPLE, "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(0));
    let row = stdout(&o);
    let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    let got = parse_factorization_in(row.trim(), &vars).unwrap();
    let expected = parse_factorization_in(
        "(-12) * (0.333333333333333 + x*y - 0.666666666666667*z^3) * (1 - 0.25*x^3*y^2*z)",
        &vars,
    )
    .unwrap();
    assert!(fact_distance(&got, &expected) < 1e-11, "{row}");
}

#[test]
fn double_root_row() {
    let o = polyfact(&["x^2 - 2*x + 1", "--tol", "1e-10"]);
    assert_eq!(stdout(&o).trim(), "(1) * (x - 1)^2");
}

#[test]
fn constant_row() {
    let o = polyfact(&["5", "--tol", "1e-10"]);
    assert_eq!(stdout(&o).trim(), "(5)");
}

#[test]
fn identical_arguments_give_identical_output() {
    for args in [
        vec![SAMPLE, "--tol", "1e-10", "--format", "json", "--seed", "7"],
        vec!["x^3*y - x*y^3 + x^2 - y^2", "--tol", "1e-10"],
    ] {
        let a = polyfact(&args);
        let b = polyfact(&args);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn reads_from_stdin_and_file() {
    let direct = polyfact(&["x^2 - 1", "--tol", "1e-10"]);
    let piped = polyfact_stdin(&["-", "--tol", "1e-10"], "x^2 - 1\n");
    assert_eq!(piped.status.code(), Some(0));
    assert_eq!(direct.stdout, piped.stdout);

    let path = std::env::temp_dir().join(format!("polyfact-cli-{}.txt", std::process::id()));
    std::fs::write(&path, "x^2 - 1\n").unwrap();
    let from_file = polyfact(&["--in", path.to_str().unwrap(), "--tol", "1e-10"]);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(direct.stdout, from_file.stdout);
}

#[test]
fn reference_adds_forward_error() {
    let o = polyfact(&["x^2 - 1", "--tol", "1e-10", "--format", "json", "--reference", "(x - 1)*(x + 1)"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&doc);
    assert!(doc["forward_error"].as_f64().unwrap() < 1e-12);

    let o = polyfact(&["x^2 - 1", "--tol", "1e-10", "--reference", "(x^2 - 1)"]);
    let row = stdout(&o);
    let last = row.lines().last().unwrap();
    assert_eq!(last, "forward error: 1");
}

#[test]
fn structure_hint_on_three_variable_product() {
    let o = polyfact(&[
        "(x + y + z + 1)*(x*y - z + 2)",
        "--tol",
        "1e-10",
        "--structure",
        "(1,1,1)(1,1,1)",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&doc);
    assert_eq!(doc["factors"].as_array().unwrap().len(), 2);
    assert!(doc["backward_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn exhaustive_and_normalize_flags() {
    let fast = polyfact(&["x^2*y + x*y^2 + x^2 + x*y", "--tol", "1e-10", "--format", "json"]);
    let slow = polyfact(&["x^2*y + x*y^2 + x^2 + x*y", "--tol", "1e-10", "--format", "json", "--exhaustive"]);
    let a: Value = serde_json::from_str(&stdout(&fast)).unwrap();
    let b: Value = serde_json::from_str(&stdout(&slow)).unwrap();
    assert_valid(&b);
    assert_eq!(a["structure"], b["structure"]);

    let o = polyfact(&["100*x^2 - 100", "--tol", "1e-10", "--normalize", "--format", "json"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let alpha = doc["alpha"]["re"].as_f64().unwrap().hypot(doc["alpha"]["im"].as_f64().unwrap());
    assert!(alpha < 1.0);
}
