use std::path::Path;
use std::process::{Command, Output};

fn capcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capcert")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = capcert(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_extract_simulate_omission_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["synth", "--sessions", "150", "--seed", "3", "--out", s(&d("w"))]);
    for f in ["corpus.json", "hypergraph.json", "templates.json", "ontology.json"] {
        assert!(d("w").join(f).is_file(), "{f}");
    }
    let corpus = d("w/corpus.json");
    ok(&[
        "extract",
        "--corpus",
        s(&corpus),
        "--ontology",
        s(&d("w/ontology.json")),
        "--forbidden",
        "hotel-booked-without-confirmation",
        "--out",
        s(&d("x")),
    ]);
    assert!(d("x/hypergraph.json").is_file());
    assert!(d("x/stats.json").is_file());
    assert!(d("x/soundness.json").is_file());

    let stdout = ok(&[
        "simulate",
        "--corpus",
        s(&corpus),
        "--hypergraph",
        s(&d("w/hypergraph.json")),
        "--templates",
        s(&d("w/templates.json")),
        "--seed",
        "1",
        "--method",
        "no_cache,cas_pab",
        "--coverage",
        "1,0.5",
        "--trace",
        "--out",
        s(&d("sim")),
    ]);
    assert!(stdout.contains("cas_pab"));
    let t3 = std::fs::read_to_string(d("sim/methods.csv")).unwrap();
    assert_eq!(t3.lines().count(), 3, "{t3}");
    assert!(d("sim/traces/cas_pab-1.00.jsonl").is_file());

    ok(&[
        "omission",
        "--corpus",
        s(&corpus),
        "--hypergraph",
        s(&d("w/hypergraph.json")),
        "--templates",
        s(&d("w/templates.json")),
        "--rates",
        "0,0.2",
        "--seed",
        "2",
        "--out",
        s(&d("om")),
    ]);
    let om = std::fs::read_to_string(d("om/omission.csv")).unwrap();
    assert_eq!(om.lines().count(), 3, "{om}");

    ok(&["report", "--report", s(&d("sim/report.json")), "--out", s(&d("again"))]);
    for f in ["methods.csv", "coverage.csv", "report.json"] {
        assert_eq!(
            std::fs::read(d("sim").join(f)).unwrap(),
            std::fs::read(d("again").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = capcert(&[
        "simulate",
        "--corpus",
        "/nonexistent/corpus.json",
        "--hypergraph",
        "/nonexistent/h.json",
        "--templates",
        "/nonexistent/t.json",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nonexistent"));

    ok(&[
        "synth",
        "--sessions",
        "5",
        "--seed",
        "1",
        "--out",
        s(&dir.path().join("w")),
    ]);
    let w = |n: &str| dir.path().join("w").join(n);
    let bad_cost = capcert(&[
        "simulate",
        "--corpus",
        s(&w("corpus.json")),
        "--hypergraph",
        s(&w("hypergraph.json")),
        "--templates",
        s(&w("templates.json")),
        "--seed",
        "1",
        "--cost-model",
        "rag=lots",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_cost.status.code(), Some(1));
    let bad_rate = capcert(&[
        "synth",
        "--sessions",
        "5",
        "--seed",
        "1",
        "--duplicate-rate",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_rate.status.code(), Some(1));
}

#[test]
fn unsound_demo_and_antichain() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["unsound-demo", "--out", s(dir.path())]);
    assert!(stdout.contains("0.85"));
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("demo.json")).unwrap()).unwrap();
    for r in reports.as_array().unwrap() {
        assert_eq!(r["semantic_unsafe_hits"], 1);
        assert_eq!(r["cas_unsafe_hits"], 0);
    }

    let graph = dir.path().join("leak.json");
    std::fs::write(
        &graph,
        r#"{"nodes":["read_PII","query_db","gen","f_leak"],
            "arcs":[{"sources":["read_PII","gen"],"targets":["f_leak"],"rate":1.0,"kind":"Manual"}],
            "forbidden":["f_leak"]}"#,
    )
    .unwrap();
    let stdout = ok(&["antichain", "--hypergraph", s(&graph)]);
    assert!(stdout.contains("defect total = 1"), "{stdout}");
}
