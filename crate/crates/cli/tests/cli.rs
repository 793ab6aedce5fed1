use serde_json::Value;
use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

fn coset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coset")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// x_t = diag(e^{it}, e^{-it}) in the [re, im] matrix format.
fn sl2_point(t: f64) -> Value {
    serde_json::json!([[[t.cos(), t.sin()], [0.0, 0.0]], [[0.0, 0.0], [t.cos(), -t.sin()]]])
}

#[test]
fn info_reports_dimensions() {
    let out = coset(&["info", "--preset", "sl4c_su22_so4c"]);
    assert!(out.status.success());
    let v = json_of(&out);
    assert_eq!(v["dims"]["g"], 30);
    assert_eq!(v["dims"]["g_sigma1"], 15);
    assert_eq!(v["dims"]["g_sigma2"], 12);
    assert_eq!(v["valid"], true);
    let v = json_of(&coset(&["info", "--preset", "sl2c_sl2r_so2c"]));
    assert_eq!((v["dims"]["g"].as_u64(), v["dims"]["g_sigma1"].as_u64(), v["dims"]["g_sigma2"].as_u64()), (Some(6), Some(3), Some(2)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"name\": ");
    assert_eq!(coset(&["info", "--scenario", &bad]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(coset(&["info", "--scenario", missing.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(coset(&["info", "--preset", "no_such_preset"]).status.code(), Some(2));
    assert_eq!(coset(&["info", "--preset", "sl2c_sl2r_so2c", "--tol", "nonsense=1"]).status.code(), Some(2));
    assert_eq!(coset(&["info"]).status.code(), Some(2));
    assert_eq!(coset(&["example", "sl3"]).status.code(), Some(2));
    let unwritable = dir.path().join("no_dir").join("out.json");
    assert_eq!(coset(&["info", "--preset", "sl2c_sl2r_so2c", "--out", unwritable.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn invalid_involution_is_rejected_with_failures_listed() {
    let dir = tempfile::tempdir().unwrap();
    // A = diag(1, 2) is not an involution matrix.
    let text = r#"{"name": "broken", "N": 2, "preset": "sl2c_sl2r_so2c",
        "sigma2": {"A": [[[1,0],[0,0]],[[0,0],[2,0]]], "antiholomorphic": false, "transpose": true}}"#;
    let path = write(dir.path(), "s.json", text);
    let out = coset(&["info", "--scenario", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma2"));
}

#[test]
fn classify_sl2_fundamental_domain() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<Value> = (0..5).map(|i| sl2_point(i as f64 * PI / 8.0)).collect();
    let path = write(dir.path(), "pts.json", &serde_json::json!({"points": pts}).to_string());
    let out = coset(&["classify", "--preset", "sl2c_sl2r_so2c", "--points", &path]);
    assert!(out.status.success());
    let v = json_of(&out);
    let rows: Vec<(bool, bool, bool)> = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["closed"].as_bool().unwrap(), p["strongly_regular"].as_bool().unwrap(), p["proper_point"].as_bool().unwrap()))
        .collect();
    assert_eq!(
        rows,
        vec![(true, false, true), (true, true, true), (true, false, false), (true, true, true), (true, false, true)]
    );
}

#[test]
fn classify_empty_and_nonclosed() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.json", "{\"points\": []}");
    let v = json_of(&coset(&["classify", "--preset", "sl2c_sl2r_so2c", "--points", &empty]));
    assert_eq!(v["points"].as_array().unwrap().len(), 0);
    assert_eq!(v["summary"]["total"], 0);
    // A unipotent point: its orbit is not closed.
    let unip = serde_json::json!([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 0.0]]]);
    let path = write(dir.path(), "n.json", &serde_json::json!([unip]).to_string());
    let v = json_of(&coset(&["classify", "--preset", "sl2c_sl2r_so2c", "--points", &path]));
    let p = &v["points"][0];
    assert_eq!(p["verdict"], "non_closed");
    assert!(p["nil_witness"].is_array());
    assert!(p["closed_base"].is_array());
}

#[test]
fn output_is_deterministic_and_job_independent() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<Value> = (0..6).map(|i| sl2_point(0.1 + 0.23 * i as f64)).collect();
    let path = write(dir.path(), "pts.json", &serde_json::json!(pts).to_string());
    let a = coset(&["classify", "--preset", "sl2c_sl2r_so2c", "--points", &path, "--seed", "5", "--jobs", "1"]);
    let b = coset(&["classify", "--preset", "sl2c_sl2r_so2c", "--points", &path, "--seed", "5", "--jobs", "4"]);
    let c = coset(&["classify", "--preset", "sl2c_sl2r_so2c", "--points", &path, "--seed", "5", "--jobs", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(b.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("e-1") || text.contains("e0"), "floats use exponent form");
}

#[test]
fn phi_and_flow() {
    let dir = tempfile::tempdir().unwrap();
    let off = serde_json::json!([[[2.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]]);
    let path = write(dir.path(), "p.json", &serde_json::json!([sl2_point(0.3), off]).to_string());
    let v = json_of(&coset(&["phi", "--preset", "sl2c_sl2r_so2c", "--points", &path]));
    assert_eq!(v["points"][0]["in_zero_fiber"], true);
    assert_eq!(v["points"][1]["in_zero_fiber"], false);
    let v = json_of(&coset(&["flow", "--preset", "sl2c_sl2r_so2c", "--points", &path, "--jobs", "2"]));
    assert_eq!(v["points"][0]["trace"]["iterations"], 0);
    assert_eq!(v["points"][1]["status"], "converged");
    assert!(v["points"][1]["trace"]["csv"].as_str().unwrap().starts_with("iteration,norm,step\n"));
    let unip = serde_json::json!([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 0.0]]]);
    let path = write(dir.path(), "u.json", &serde_json::json!([unip]).to_string());
    let v = json_of(&coset(&["flow", "--preset", "sl2c_sl2r_so2c", "--points", &path, "--tol", "max_iters=50"]));
    assert_eq!(v["points"][0]["status"], "not_converged");
    assert_eq!(v["points"][0]["trace"]["iterations"], 50);
}

#[test]
fn cartans_and_weyl() {
    let v = json_of(&coset(&["cartans", "--preset", "sl2c_sl2r_so2c"]));
    let c0 = &v["classes"][0];
    assert_eq!((c0["dim_t"].as_u64(), c0["dim_a"].as_u64()), (Some(1), Some(0)));
    assert_eq!(c0["weyl_order"], 4);
    let a = json_of(&coset(&["cartans", "--preset", "sl4c_su22_kc", "--seed", "1"]));
    let b = json_of(&coset(&["cartans", "--preset", "sl4c_su22_kc", "--seed", "99"]));
    let types: Vec<(u64, u64)> = a["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["dim_t"].as_u64().unwrap(), c["dim_a"].as_u64().unwrap()))
        .collect();
    assert!(types.len() >= 3);
    for t in [(2, 0), (1, 1), (0, 2)] {
        assert!(types.contains(&t), "{types:?}");
    }
    for (x, y) in a["classes"].as_array().unwrap().iter().zip(b["classes"].as_array().unwrap()) {
        assert_eq!(x["invariants"], y["invariants"]);
    }
    let w = json_of(&coset(&["weyl", "--preset", "sl2c_sl2r_so2c"]));
    assert_eq!(w["classes"][0]["weyl"]["elements"].as_array().unwrap().len(), 4);
}

#[test]
fn examples_pass() {
    for name in ["sl2", "su22kc", "su22so4c"] {
        let out = coset(&["example", name]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        let v = json_of(&out);
        assert_eq!(v["all_pass"], true);
        for r in v["rows"].as_array().unwrap() {
            assert!(["published", "derived"].contains(&r["provenance"].as_str().unwrap()));
        }
    }
}
