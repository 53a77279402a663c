use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stokes-atlas"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

const SYSTEM: &str = r#"{
  "k": 1,
  "epsilon": [[-1.0, 0.0]],
  "numerator": [
    [[[1.0, 0.1], [0.05, 0.02]], [[-0.03, 0.04], [-0.5, 0.0]]],
    [[[0.2, 0.0], [0.01, 0.0]], [[0.0, -0.02], [0.0, 0.1]]]
  ]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn classify_k1() {
    let o = run(&["classify", "--epsilon=-1", "--k", "1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["diagram"], "()");
    let tau = &v["taus"][0];
    assert!(tau[0].as_f64().unwrap().abs() < 1e-12);
    assert!((tau[1].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn classify_k3_gives_enumerated_id() {
    let o = run(&["classify", "--epsilon", "0.3+0.1i,-0.7+0.2i,0.1-0.4i"]);
    assert_eq!(code(&o), 0);
    let words = ["()()()", "()(())", "(())()", "(()())", "((()))"];
    assert!(words.contains(&json(&o)["diagram"].as_str().unwrap()));
}

#[test]
fn boundary_is_refused() {
    let o = run(&["classify", "--epsilon", "1"]);
    assert_eq!(code(&o), 2);
    let v = json(&o);
    assert_eq!(v["status"], "refusal");
    assert!(v.get("diagram").is_none());
}

#[test]
fn usage_errors_exit_4() {
    assert_eq!(code(&run(&["classify", "--epsilon", "nope"])), 4);
    assert_eq!(code(&run(&["classify", "--epsilon", "1,2", "--k", "1"])), 4);
    assert_eq!(code(&run(&["frobnicate"])), 4);
    assert_eq!(code(&run(&["--version"])), 0);
    let o = bin().env("STOKES_ATLAS_THREADS", "zero").args(["classify", "--epsilon=-1"]).output().unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn portrait_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.svg");
    let b = dir.path().join("b.svg");
    for p in [&a, &b] {
        let o = run(&["portrait", "--epsilon", "0.3+0.2i,-0.5+0.4i", "--slant", "0.05", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let sa = std::fs::read(&a).unwrap();
    assert_eq!(sa, std::fs::read(&b).unwrap());
    let s = String::from_utf8(sa).unwrap();
    assert_eq!(s.matches(r#"class="separatrix""#).count(), 4);
    assert_eq!(s.matches(r#"class="root""#).count(), 3);
    let o = run(&["portrait", "--epsilon=-1"]);
    let s = String::from_utf8(o.stdout).unwrap();
    assert_eq!(s.matches(r#"class="separatrix""#).count(), 2);
    assert_eq!(s.matches(r#"class="root""#).count(), 2);
}

#[test]
fn extract_then_check_compat() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "sys.json", SYSTEM);
    let doc = dir.path().join("doc.json");
    let o = run(&["extract", &sys, "--out", doc.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&doc).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["diagram"], "()");

    let d = doc.to_str().unwrap();
    let o = run(&["check-compat", d, d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["pass"], true);

    let mut other = v.clone();
    other["epsilon"][0][0] = serde_json::json!(-2.0);
    let o2 = write(dir.path(), "other.json", &other.to_string());
    assert_eq!(code(&run(&["check-compat", d, &o2])), 4);

    let mut bad = v;
    bad["schema_version"] = serde_json::json!(7);
    let b = write(dir.path(), "bad.json", &bad.to_string());
    assert_eq!(code(&run(&["check-compat", &b])), 4);
}

#[test]
fn sweep_empty_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.json", r#"{"k":1,"base":[[0,0]],"axes":[]}"#);
    let o = run(&["sweep", &empty]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["points"].as_array().unwrap().len(), 0);

    let grid = write(
        dir.path(),
        "grid.json",
        r#"{"k":1,"base":[[0,0]],"axes":[{"component":0,"part":"re","min":-2,"max":2,"count":9}]}"#,
    );
    let csv = dir.path().join("out.csv");
    let runs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|t| {
            let o = bin().env("STOKES_ATLAS_THREADS", t).args(["sweep", &grid, "--csv", csv.to_str().unwrap()]).output().unwrap();
            assert_eq!(code(&o), 0);
            o.stdout
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let v: serde_json::Value = serde_json::from_slice(&runs[0]).unwrap();
    for p in v["points"].as_array().unwrap() {
        let e0 = p["epsilon"][0][0].as_f64().unwrap();
        assert_eq!(p["status"], if e0 < 0.0 { "pass" } else { "refusal" }, "eps0 = {e0}");
    }
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 10);
}
