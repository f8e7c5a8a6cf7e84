use std::path::Path;

use mrpred_core::cli::{self, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut full = vec!["mrpred"];
    full.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(full, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn synth(dir: &Path, methods: usize, seed: u64) {
    let r = run(&[
        "synth",
        "--methods",
        &methods.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
}

#[test]
fn transform_addition() {
    let r = run(&["transform", "--mr", "addition", "--input", "1,2,3", "--c", "2"]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.stdout, "3,4,5\n");
}

#[test]
fn transform_other_relations() {
    assert_eq!(run(&["transform", "--mr", "permutation", "--input", "1,2,3"]).stdout, "3,1,2\n");
    assert_eq!(run(&["transform", "--mr", "inversion", "--input", "2,-4"]).stdout, "0.5,-0.25\n");
    assert_eq!(run(&["transform", "--mr", "exclusion", "--input", "1,2"]).stdout, "1\n");
    assert_eq!(run(&["transform", "--mr", "multiplication", "--input", "-1,2", "--c", "-3"]).stdout, "3,-6\n");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["transform", "--mr", "addition", "--input", "1,2"]).code, EXIT_USAGE);
    assert_eq!(run(&["transform", "--mr", "rotation", "--input", "1"]).code, EXIT_USAGE);
    assert_eq!(run(&["transform", "--mr", "addition", "--input", "1,x", "--c", "1"]).code, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(run(&[]).code, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["compare", "--corpus", dir.path().to_str().unwrap(), "--out", "x.json", "--threads", "0"]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn help_exits_zero() {
    let r = run(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("compare"));
}

#[test]
fn synth_writes_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 12, 4);
    let dots = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "dot"))
        .count();
    assert_eq!(dots, 12);
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 13);
    assert!(labels.starts_with("method_id,addition,"));
}

#[test]
fn features_writes_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 10, 1);
    let out = dir.path().join("features.csv");
    let r = run(&["features", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("method_id,"));
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().nth(1).unwrap().starts_with("m000,"));
}

#[test]
fn compare_report_layout_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 40, 2);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let ra = run(&["compare", "--corpus", corpus.to_str().unwrap(), "--seed", "5", "--out", a.to_str().unwrap()]);
    let rb = run(&["compare", "--corpus", corpus.to_str().unwrap(), "--seed", "5", "--out", b.to_str().unwrap()]);
    assert_eq!(ra.code, EXIT_OK, "{}", ra.stderr);
    assert_eq!(ra.stdout, rb.stdout);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let v: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["addition", "multiplication", "permutation", "inclusion", "exclusion", "inversion", "meta"]
    );
    let add = &v["addition"];
    assert_eq!(add["svm"]["accuracies"].as_array().unwrap().len(), 5);
    assert_eq!(add["labelprop"]["selected_params"].as_array().unwrap().len(), 5);
    assert_eq!(add["t_test"]["degrees_of_freedom"], 4);
    assert_eq!(v["meta"]["seed"], 5);
    assert_eq!(v["meta"]["corpus_methods"], 40);
    assert_eq!(v["meta"]["corpus_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn evaluate_single_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 30, 3);
    let out = dir.path().join("r.json");
    let r = run(&[
        "evaluate",
        "--corpus",
        corpus.to_str().unwrap(),
        "--model",
        "svm",
        "--mr",
        "inversion",
        "--repeats",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["inversion", "meta"]);
    assert!(v["inversion"].get("labelprop").is_none());
    assert!(v["inversion"].get("t_test").is_none());
    assert_eq!(v["inversion"]["svm"]["accuracies"].as_array().unwrap().len(), 3);
}

fn rewrite_labels(corpus: &Path, edit: impl Fn(usize, &str) -> String) {
    let path = corpus.join("labels.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let out: String = text.lines().enumerate().map(|(i, l)| edit(i, l) + "\n").collect();
    std::fs::write(path, out).unwrap();
}

#[test]
fn single_class_relation_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 20, 0);
    // Force the addition column to 1 everywhere.
    rewrite_labels(&corpus, |i, l| {
        if i == 0 {
            return l.to_string();
        }
        let mut cells: Vec<&str> = l.split(',').collect();
        cells[1] = "1";
        cells.join(",")
    });
    let out = dir.path().join("r.json");
    let r = run(&[
        "evaluate",
        "--corpus",
        corpus.to_str().unwrap(),
        "--model",
        "labelprop",
        "--mr",
        "addition",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.starts_with("error:"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn missing_graph_is_reported_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 10, 0);
    std::fs::remove_file(corpus.join("m004.dot")).unwrap();
    let r = run(&["compare", "--corpus", corpus.to_str().unwrap(), "--out", "unused.json"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("missing graph: m004"), "{}", r.stderr);
}

#[test]
fn bad_label_value_is_reported_by_row() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 10, 0);
    rewrite_labels(&corpus, |i, l| if i == 2 { l.replacen(",0", ",2", 1).replacen(",1", ",2", 1) } else { l.to_string() });
    let r = run(&["compare", "--corpus", corpus.to_str().unwrap(), "--out", "unused.json"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("row 3"), "{}", r.stderr);
}

#[test]
fn invalid_graph_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, 10, 0);
    std::fs::write(corpus.join("m001.dot"), "digraph g { a -> b; c -> b; }").unwrap();
    let r = run(&["compare", "--corpus", corpus.to_str().unwrap(), "--out", "unused.json"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("error"), "{}", r.stderr);
}
