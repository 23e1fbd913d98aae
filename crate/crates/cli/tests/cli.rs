use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/data")
        .join(name)
}

fn elcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elcq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn answer_running_example() {
    let (kb, q) = (data("ex1.kb"), data("ex3.q"));
    let out = elcq(&["answer", kb.to_str().unwrap(), q.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("(a, b)"));
    assert!(text.contains("unsound: 0"), "{text}");
}

#[test]
fn answer_json_has_a_fixed_key_set() {
    let (kb, q) = (data("ex1.kb"), data("ex3.q"));
    let out = elcq(&[
        "--format",
        "json",
        "answer",
        kb.to_str().unwrap(),
        q.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let want: BTreeSet<&str> = [
        "answers",
        "candidates",
        "unsound",
        "filter_ms_avg",
        "choices_avg",
        "fast_path_hits",
        "unsat",
    ]
    .into();
    assert_eq!(keys, want);
    assert_eq!(v["answers"], serde_json::json!([["a", "b"]]));
    assert_eq!(v["unsound"], 0);
    assert_eq!(v["unsat"], false);
}

#[test]
fn check_reports_unsatisfiable_with_success() {
    let dir = TempDir::new().unwrap();
    let kb = write(&dir, "unsat.kb", "TBOX\nA SubClassOf Bot\nABOX\nA(a)\n");
    let out = elcq(&["check", &kb]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "unsatisfiable");

    let sat = write(&dir, "sat.kb", "TBOX\nA SubClassOf B\nABOX\nA(a)\n");
    assert_eq!(stdout(&elcq(&["check", &sat])).trim(), "satisfiable");
}

#[test]
fn answer_on_unsatisfiable_kb_prints_the_banner() {
    let dir = TempDir::new().unwrap();
    let kb = write(&dir, "unsat.kb", "TBOX\nA SubClassOf Bot\nABOX\nA(a)\n");
    let q = write(&dir, "q.q", "q(?x) :- B(?x).\n");
    let out = elcq(&["answer", &kb, &q]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("unsatisfiable: every tuple is a certain answer"));
}

#[test]
fn gen_hard_then_classify() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().display().to_string();
    let out = elcq(&[
        "gen-hard",
        "trans",
        "--cnf",
        "1 -2 0 2 0",
        "--out",
        &out_dir,
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let q = dir.path().join("trans.q");
    assert_eq!(
        stdout(&elcq(&["classify", q.to_str().unwrap()])).trim(),
        "arborescent"
    );

    elcq(&[
        "gen-hard",
        "acyclic",
        "--cnf",
        "1 -2 0 2 0",
        "--out",
        &out_dir,
    ]);
    let (kb, q) = (dir.path().join("acyclic.kb"), dir.path().join("acyclic.q"));
    assert_eq!(
        stdout(&elcq(&["classify", q.to_str().unwrap()])).trim(),
        "acyclic"
    );
    let out = elcq(&["answer", kb.to_str().unwrap(), q.to_str().unwrap()]);
    assert_eq!(stdout(&out).lines().next(), Some("true"));
}

#[test]
fn classify_decides_arborescent_queries_over_elho() {
    let dir = TempDir::new().unwrap();
    let kb = write(&dir, "k.kb", "TBOX\nA SubClassOf some R B\nABOX\nA(a)\n");
    let q = write(&dir, "q.q", "q() :- R(?x, ?y), R(?x, ?z), A(?x).\n");
    let out = elcq(&["classify", &q, "--kb", &kb]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "acyclic\n");

    let q = write(&dir, "q2.q", "q() :- R(?y, ?x), B(?y).\n");
    let out = stdout(&elcq(&["classify", &q, "--kb", &kb]));
    assert_eq!(out, "arborescent\nentailed: false\n");
    let q = write(&dir, "q3.q", "q() :- R(?x, ?y), A(?x).\n");
    let out = stdout(&elcq(&["classify", &q, "--kb", &kb]));
    assert_eq!(out, "arborescent\nentailed: true\n");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (kb, q) = (data("ex1.kb"), data("ex3.q"));
    let (kb, q) = (kb.to_str().unwrap(), q.to_str().unwrap());

    assert_eq!(elcq(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        elcq(&["check", "/nonexistent/file.kb"]).status.code(),
        Some(1)
    );
    assert_eq!(
        elcq(&["--branch-cap", "0", "check", kb]).status.code(),
        Some(1)
    );
    assert_eq!(elcq(&["--help"]).status.code(), Some(0));

    let bad = write(&dir, "bad.q", "q( :- \n");
    let out = elcq(&["answer", kb, &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(
        elcq(&["gen-hard", "filter", "--cnf", "1 2 3 4 0"])
            .status
            .code(),
        Some(2)
    );

    assert_eq!(
        elcq(&["--max-facts", "3", "check", kb]).status.code(),
        Some(3)
    );
    assert_eq!(
        elcq(&["--branch-cap", "1", "answer", kb, q]).status.code(),
        Some(3)
    );
    // The running example has an infinite chase.
    assert_eq!(
        elcq(&["--depth", "2", "oracle", kb, q]).status.code(),
        Some(3)
    );
}

#[test]
fn strict_rejects_what_lenient_mode_drops() {
    let dir = TempDir::new().unwrap();
    // Self restriction on a role with a transitive subrole is not allowed.
    let kb = write(
        &dir,
        "k.kb",
        "TBOX\ntransitive R\nA SubClassOf self R\nA SubClassOf B\nABOX\nA(a)\n",
    );
    let q = write(&dir, "q.q", "q(?x) :- B(?x).\n");
    assert_eq!(
        elcq(&["--strict", "answer", &kb, &q]).status.code(),
        Some(2)
    );
    let out = elcq(&["answer", &kb, &q]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(stdout(&out).lines().next(), Some("(a)"));
}

#[test]
fn oracle_agrees_on_a_finite_kb() {
    let dir = TempDir::new().unwrap();
    let kb = write(
        &dir,
        "k.kb",
        "TBOX\nA SubClassOf some R B\nR SubRoleOf S\nABOX\nA(a)\nS(a, b)\n",
    );
    let q = write(&dir, "q.q", "q(?x) :- S(?x, ?y), B(?y).\n");
    let oracle = elcq(&["oracle", &kb, &q]);
    assert_eq!(oracle.status.code(), Some(0));
    assert_eq!(stdout(&oracle).lines().next(), Some("(a)"));
    let answer = elcq(&["answer", &kb, &q]);
    assert_eq!(stdout(&answer).lines().next(), Some("(a)"));
}

#[test]
fn materialize_reports_counts() {
    let kb = data("ex1.kb");
    let out = elcq(&["--format", "json", "materialize", kb.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["abox_atoms"], 2);
    assert!(v["facts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "eq aux:T:G a"));
    assert!(v["ratio"].as_f64().unwrap() > 1.0);
}

#[test]
fn gen_bench_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let out = elcq(&[
            "--scale",
            "2",
            "--seed",
            "7",
            "gen-bench",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |d: &TempDir, f: &str| fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "bench_s2.kb"), read(&b, "bench_s2.kb"));
    for q in ["q1.q", "q2.q", "q3.q", "q4.q", "q5.q"] {
        assert_eq!(read(&a, q), read(&b, q));
    }
}

#[test]
fn pruning_does_not_change_answers() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    elcq(&["gen-hard", "refl", "--cnf", "1 2 0 -1 0", "--out", out_dir]);
    let (kb, q) = (dir.path().join("refl.kb"), dir.path().join("refl.q"));
    let run = |extra: &[&str]| {
        let mut args = vec!["answer", kb.to_str().unwrap(), q.to_str().unwrap()];
        args.extend_from_slice(extra);
        stdout(&elcq(&args)).lines().next().map(String::from)
    };
    assert_eq!(run(&[]), Some("true".into()));
    assert_eq!(run(&["--no-prune"]), Some("true".into()));
}
