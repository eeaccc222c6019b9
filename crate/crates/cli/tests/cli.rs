use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sleepmst_core::metrics::from_csv;
use sleepmst_core::WeightedGraph;

fn sleepmst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleepmst")).args(args).env_remove("SLEEPMST_MAX_ROUNDS").output().unwrap()
}

fn json(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn read(path: &Path) -> WeightedGraph {
    WeightedGraph::read_from(std::fs::read_to_string(path).unwrap().as_bytes()).unwrap()
}

#[test]
fn gen_ring_has_len_nodes_and_edges_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for p in [&a, &b] {
        let out = sleepmst(&["gen", "--family", "ring", "--n", "44", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let g = read(&a);
    assert_eq!((g.n(), g.m()), (44, 44));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn gen_grc_writes_a_valid_graph() {
    let out = sleepmst(&["gen", "--family", "grc", "--rows", "4", "--cols", "64", "--seed", "2"]);
    assert!(out.status.success());
    let g = WeightedGraph::read_from(out.stdout.as_slice()).unwrap();
    assert!(g.validate().is_ok());
    assert!(g.n() > 4 * 64);
}

#[test]
fn run_rand_on_a_ring_matches_the_oracle() {
    let out = sleepmst(&["run", "--family", "ring", "--n", "16", "--algo", "rand", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(&out)[0];
    assert_eq!(r["oracle_match"], true);
    assert_eq!(r["n"], 16);
    assert!(r["F_i"].as_array().unwrap().len() > 1);
}

#[test]
fn run_det_from_a_graph_file_in_csv() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    assert!(sleepmst(&["gen", "--n", "64", "--seed", "1", "--out", g.to_str().unwrap()]).status.success());
    let out = sleepmst(&["run", "--graph", g.to_str().unwrap(), "--algo", "det", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].oracle_match, Some(true));
    assert_eq!(recs[0].algo, "det");
    assert!(recs[0].awake_max <= recs[0].total_rounds);
}

#[test]
fn tradeoff_with_full_k_leaves_the_last_stage_almost_idle() {
    let out = sleepmst(&["run", "--n", "64", "--algo", "tradeoff", "--k", "6", "--detail"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(&out)[0];
    assert_eq!(r["oracle_match"], true);
    assert_eq!(r["detail"]["fragments_after_ghs"], 1);
    let stage3 = r["detail"]["stage_awake_max"][2].as_u64().unwrap();
    assert!(stage3 <= 8, "stage three awake {stage3}");
}

#[test]
fn trials_use_consecutive_seeds() {
    let out = sleepmst(&["run", "--n", "16", "--algo", "rand", "--seed", "10", "--trials", "3", "--format", "csv"]);
    assert!(out.status.success());
    let recs = from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(recs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11, 12]);
}

#[test]
fn trace_has_one_json_line_per_awake_node_round() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("trace.jsonl");
    let out = sleepmst(&["run", "--family", "ring", "--n", "6", "--algo", "rand", "--trace", t.to_str().unwrap()]);
    assert!(out.status.success());
    let rec = &json(&out)[0];
    let lines: Vec<Value> =
        std::fs::read_to_string(&t).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let awake_total = rec["awake_avg"].as_f64().unwrap() * 6.0;
    assert_eq!(lines.len() as f64, awake_total.round());
    for key in ["round", "node", "sent", "received"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn sweep_row_count_is_the_cross_product_times_trials() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.txt");
    std::fs::write(&spec, "algo = rand\nn = 16..256*2\ntrials = 20\nseed = 3\n").unwrap();
    let csv = dir.path().join("out.csv");
    let out = sleepmst(&["sweep", spec.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(recs.len(), 100);
    assert!(recs.iter().all(|r| r.oracle_match == Some(true)));
}

#[test]
fn engine_cap_from_the_environment_gives_exit_three() {
    let out = Command::new(env!("CARGO_BIN_EXE_sleepmst"))
        .args(["run", "--n", "16", "--algo", "det"])
        .env("SLEEPMST_MAX_ROUNDS", "50")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)[0]["oracle_match"], Value::Null);
}

#[test]
fn failed_sweep_runs_are_flushed_with_markers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.txt");
    std::fs::write(&spec, "algo = det, rand\nn = 8\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sleepmst"))
        .args(["sweep", spec.to_str().unwrap()])
        .env("SLEEPMST_MAX_ROUNDS", "500")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with("FAILED"));
    assert!(rows[1].ends_with("true"));
}

#[test]
fn bad_input_exits_with_four() {
    assert_eq!(sleepmst(&["run", "--algo", "nope"]).status.code(), Some(4));
    assert_eq!(sleepmst(&["run", "--algo", "rand", "--n", "1"]).status.code(), Some(4));
    assert_eq!(sleepmst(&["run", "--algo", "rand", "--graph", "/no/such/file"]).status.code(), Some(4));
    assert_eq!(sleepmst(&["sweep", "/no/such/spec"]).status.code(), Some(4));
    assert_eq!(sleepmst(&["run", "--algo", "rand", "--trials", "2", "--trace", "x"]).status.code(), Some(4));
    assert!(sleepmst(&["--help"]).status.success());
}
