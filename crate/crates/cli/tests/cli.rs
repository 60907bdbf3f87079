use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_structverify"))
}

fn suite_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/suite")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const GOOD: &str =
    "block = design.getBlock()\nnet = block.findNet(\"clk\")\nif net != None:\n    print(net.getWeight())\n";

#[test]
fn verify_accepts_a_grounded_program() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "ok.qas", GOOD);
    let o = run(&["verify", "--prompt", "print the weight of net clk", &p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["pass"], true);
    assert_eq!(v["layer"], 0);
}

#[test]
fn verify_reports_the_failing_layer() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.qas", "block = design.getBlock()\nnet = block.findNet(\"clk\")\nnet.setWeight()\n");
    let o = run(&["verify", "--prompt", "set the weight of net clk to 2", &p]);
    assert_eq!(code(&o), 1);
    let v = json(&o);
    assert_eq!(v["pass"], false);
    assert!(v["layer"].as_u64().unwrap() >= 2);
    assert!(!v["issues"].as_array().unwrap().is_empty());
}

#[test]
fn verify_without_graph_or_prompt_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "ok.qas", GOOD);
    let o = run(&["verify", &p]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--graph"));
}

#[test]
fn synth_then_score_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["synth", "--prompt", "set the weight of net clk to 2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(res["accepted"], true);
    assert!(res["final"].as_str().unwrap().contains("setWeight"));

    let o = run(&["score", "--result", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o);
    let u = s["u"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&u));
    assert_eq!(s["filtered"], false);
}

#[test]
fn score_rejects_a_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&run(&["synth", "--prompt", "count the nets", "--out", out.to_str().unwrap()])), 0);
    let cfg = write(dir.path(), "u.json", r#"{"alpha": [0.9, 0.9, 0.9]}"#);
    let o = run(&["score", "--result", out.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_prints_output_and_mirrors_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "ok.qas", GOOD);
    let o = run(&["run", "--snapshot", "synthetic:gcd", &p]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1");

    let p = write(dir.path(), "err.qas", "x = odb.nothing()\n");
    let o = run(&["run", "--snapshot", "synthetic:gcd", "--json", &p]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["status"], "runtime_error");

    let p = write(dir.path(), "syn.qas", "if x\n");
    assert_eq!(code(&run(&["run", "--snapshot", "synthetic:gcd", &p])), 1);

    let o = run(&["run", "--snapshot", "missing.json", &p]);
    assert_eq!(code(&o), 2);
}

#[test]
fn extract_graph_emits_a_validated_graph() {
    let o = run(&["extract-graph", "--prompt", "print the weight of net reset"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["validated"], true);
    let types: Vec<&str> = v["graph"]["nodes"].as_array().unwrap().iter().filter_map(|n| n["type"].as_str()).collect();
    assert!(types.contains(&"Net"), "{types:?}");
}

#[test]
fn multistep_keeps_session_state() {
    let dir = tempfile::tempdir().unwrap();
    let task = write(
        dir.path(),
        "mt.json",
        r#"{"id": "t1", "snapshot": "synthetic:gcd", "steps": ["set the weight of net clk to 5", "print the weight of net clk"]}"#,
    );
    let out = dir.path().join("ep.json");
    let o = run(&["multistep", "--task", &task, "--reflect", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"5\""), "{text}");
}

#[test]
fn bench_writes_metrics_for_the_bundled_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.json");
    let o = run(&[
        "bench",
        "--suite",
        suite_dir().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--force-exec",
        "--theta-sweep",
        "0:1:0.25",
        "--workers",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(m.to_string().contains("total_calls"));
    let calls = find(&m, "total_calls").and_then(Value::as_u64).unwrap();
    let steps = find(&m, "executed_steps").and_then(Value::as_u64).unwrap();
    assert_eq!(calls, steps);
}

#[test]
fn bench_fails_on_a_missing_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "bench",
        "--suite",
        dir.path().join("nope").to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_ne!(code(&o), 0);
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(code(&run(&["verify", "--max-layer", "9", "x.qas"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

fn find<'a>(v: &'a Value, key: &str) -> Option<&'a Value> {
    match v {
        Value::Object(m) => m.get(key).or_else(|| m.values().find_map(|x| find(x, key))),
        Value::Array(a) => a.iter().find_map(|x| find(x, key)),
        _ => None,
    }
}
