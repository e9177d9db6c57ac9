use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mlylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlylab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn csv_rows(text: &str) -> Vec<(u128, f64, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,S,A"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

fn fact(n: u128) -> u128 {
    (1..=n).product()
}

#[test]
fn factorial_trace_hits_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let o = mlylab(&[
        "trace",
        "--example",
        "factorial",
        "--depth",
        "10",
        "--x",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rows = csv_rows(&fs::read_to_string(&out).unwrap());
    let b10 = fact(11) + fact(10) - 1;
    let (_, _, a) = rows
        .iter()
        .find(|r| r.0 == b10 - 1)
        .copied()
        .expect("row at b_10 - 1");
    let want = 2.0 * (fact(10) - 1) as f64 / (fact(11) + fact(10) - 2) as f64;
    assert!((a - want).abs() <= 1e-15 * want);

    let meta: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f.csv.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["seed"], 0);
    assert_eq!(meta["config"]["horizon"], (2 * fact(11) - 2).to_string());
}

#[test]
fn cubic_trace_reaches_depth() {
    let o = mlylab(&["trace", "--example", "cubic", "--depth", "5", "--x", "1"]);
    assert!(o.status.success());
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    let c6 = 6_675_359u128;
    let (_, _, a) = rows.iter().find(|r| r.0 == c6 - 1).copied().unwrap();
    assert!(a >= 5.0);
}

#[test]
fn zero_vector_trace_is_zero() {
    let o = mlylab(&["trace", "--example", "cubic", "--depth", "3", "--x", "0"]);
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.2 == 0.0));
}

#[test]
fn dichotomy_verdicts() {
    let cubic = json_of(&mlylab(&["classify", "dichotomy", "--example", "cubic"]));
    assert_eq!(
        cubic["result"]["verdicts"],
        serde_json::json!(["MS-witness"])
    );
    let p2 = json_of(&mlylab(&["classify", "dichotomy", "--example", "power2"]));
    assert_eq!(p2["result"]["verdicts"], serde_json::json!(["ME-evidence"]));
    assert_eq!(p2["result"]["c_hat"], 1.375);
}

#[test]
fn factorial_pair_is_li_yorke() {
    let r = json_of(&mlylab(&[
        "classify",
        "pair",
        "--example",
        "factorial",
        "--x",
        "3",
        "--y",
        "1",
        "--delta",
        "1",
    ]));
    let verdicts = r["result"]["verdicts"].as_array().unwrap();
    assert!(verdicts.contains(&Value::from("LiYorkeDelta")));
    assert_eq!(r["config"]["thresholds"]["delta"], 1.0);
}

#[test]
fn other_classifications_run() {
    let acb = json_of(&mlylab(&["classify", "acb", "--example", "power2"]));
    assert_eq!(acb["result"]["estimate"]["c_hat"], 1.375);
    let sub = json_of(&mlylab(&["classify", "submult", "--example", "shift1"]));
    assert_eq!(sub["result"]["result"], "bounded");
    assert_eq!(sub["result"]["c_min"], 1.0);
    let com = json_of(&mlylab(&[
        "classify",
        "commute",
        "--example",
        "cubic",
        "--depth",
        "4",
        "--x",
        "1",
        "--k",
        "3",
    ]));
    assert_eq!(com["result"]["tail_max"], 0.0);
    let vec = json_of(&mlylab(&[
        "classify",
        "vector",
        "--example",
        "cubic",
        "--x",
        "1",
        "--eps-dip",
        "0.1",
        "--m-peak",
        "7",
    ]));
    assert!(vec["result"]["verdicts"]
        .as_array()
        .unwrap()
        .contains(&Value::from("IrregularAtHorizon")));
    let cr = json_of(&mlylab(&[
        "classify",
        "criterion",
        "--example",
        "cubic-shift",
        "--eps-dip",
        "0.1",
        "--samples",
        "e3;e29;e815;e52979;e6675359",
    ]));
    assert_eq!(cr["result"]["verdict"], "Positive");
}

#[test]
fn manifold_certifies_and_verifies() {
    let r = json_of(&mlylab(&[
        "manifold",
        "--example",
        "cubic-shift",
        "--levels",
        "3",
    ]));
    let ledger = &r["result"]["ledger"];
    assert_eq!(ledger["status"]["status"], "certified");
    assert_eq!(ledger["levels"].as_array().unwrap().len(), 3);
    assert_eq!(r["result"]["verification"]["passed"], 50);
    assert_eq!(r["result"]["verification"]["total"], 50);
}

#[test]
fn exit_codes() {
    let o = mlylab(&["manifold", "--example", "shift1"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no mean-sensitivity witness"));

    assert_eq!(
        mlylab(&["manifold", "--example", "cubic-shift", "--levels", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(mlylab(&["trace", "--x", "1"]).status.code(), Some(2));
    assert_eq!(
        mlylab(&["trace", "--example", "cubic", "--x", "e5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mlylab(&[
            "trace",
            "--example",
            "factorial",
            "--depth",
            "40",
            "--x",
            "1"
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(
        mlylab(&[
            "trace",
            "--example",
            "factorial",
            "--depth",
            "3",
            "--horizon",
            "1000",
            "--x",
            "1"
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(mlylab(&["bogus"]).status.code(), Some(2));
}

#[test]
fn exhausted_search_writes_partial_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = mlylab(&[
        "manifold",
        "--example",
        "cubic-shift",
        "--max-directions",
        "1",
        "--gamma-steps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(
        v["result"]["ledger"]["status"]["status"],
        "budget_exhausted"
    );
    assert!(v["result"]["verification"].is_null());
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut all: Vec<&str> = args.to_vec();
    let p = out.to_str().unwrap().to_string();
    all.extend(["--out", &p]);
    assert!(mlylab(&all).status.success());
    fs::read(&out).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("t.csv", vec!["trace", "--example", "cubic", "--x", "2.5"]),
        (
            "m.json",
            vec!["manifold", "--example", "cubic-shift", "--seed", "9"],
        ),
        (
            "c.json",
            vec![
                "classify",
                "criterion",
                "--example",
                "cubic-shift",
                "--seed",
                "4",
            ],
        ),
    ] {
        let a = run_to(dir.path(), name, &args);
        let b = run_to(dir.path(), name, &args);
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn schedule_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    assert!(mlylab(&[
        "schedule",
        "--example",
        "factorial",
        "--depth",
        "6",
        "--out",
        sched.to_str().unwrap()
    ])
    .status
    .success());
    let from_file = mlylab(&[
        "trace",
        "--schedule-file",
        sched.to_str().unwrap(),
        "--x",
        "1",
    ]);
    let from_example = mlylab(&[
        "trace",
        "--example",
        "factorial",
        "--depth",
        "6",
        "--x",
        "1",
    ]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, from_example.stdout);
    assert_eq!(
        mlylab(&["schedule", "--example", "power2"]).status.code(),
        Some(2)
    );
}

#[test]
fn shift_commands() {
    let l = json_of(&mlylab(&[
        "shift",
        "lambda",
        "--weights",
        "poly:0,1",
        "--horizon",
        "1000",
    ]));
    assert_eq!(l["result"]["verdict"], "unbounded_evidence");
    let b = json_of(&mlylab(&[
        "shift",
        "lambda",
        "--example",
        "shift1",
        "--m-peak",
        "2",
    ]));
    assert_eq!(b["result"]["verdict"], "bounded_at_horizon");
    let v = json_of(&mlylab(&[
        "shift",
        "verify",
        "--example",
        "shift1",
        "--x",
        "e1,e2,e3,e4,e5,e6,e7,e8,e9,e10",
        "--eps",
        "0.1",
    ]));
    assert_eq!(v["result"]["holds"], true);
}
