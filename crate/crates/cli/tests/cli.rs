use std::process::{Command, Output};

use serde_json::Value;

fn finsler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finsler"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn eval_funk2_constants() {
    let out = finsler(&["eval", "--metric", "funk2", "--x", "0,0", "--y", "1,0", "--quantities", "S,e,K"]);
    assert!(out.status.success());
    let v = json_stdout(&out);
    let q = &v["quantities"];
    assert!((q["S"].as_f64().unwrap() - 1.5).abs() < 1e-9);
    assert!((q["e"].as_f64().unwrap() - 1.5).abs() < 1e-9);
    assert!((q["K"]["mean"].as_f64().unwrap() + 0.25).abs() < 1e-9);
    assert_eq!(v["conventions"]["s"], -1);
}

#[test]
fn eval_all_tags_csv() {
    let out = finsler(&["eval", "--metric", "randers-generic", "--x", "0.1,-0.2", "--y", "1,0.5", "--quantities", "all", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("quantity,index,value"));
    for tag in ["trR_berwald", "Sigma_bar", "Gamma"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{tag},"))), "missing {tag}");
    }
}

#[test]
fn unknown_tag_lists_valid_ones() {
    let out = finsler(&["eval", "--metric", "funk2", "--x", "0,0", "--y", "1,0", "--quantities", "S,Q"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`Q`") && err.contains("trR_berwald"));
}

#[test]
fn out_of_domain_is_an_input_error() {
    let out = finsler(&["eval", "--metric", "funk2", "--x", "0.9,0", "--y", "1,0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn expression_metric_infers_dimension() {
    let out = finsler(&["eval", "--expr", "sqrt(y1^2 + y2^2 + y3^2)", "--x", "0,0,0", "--y", "0,0,2", "--quantities", "F,e"]);
    assert!(out.status.success());
    let v = json_stdout(&out);
    assert_eq!(v["dim"], 3);
    assert!((v["quantities"]["F"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn verify_without_metrics_passes() {
    let out = finsler(&["verify", "--suite", "core", "--metrics", "none"]);
    assert!(out.status.success());
    let v = json_stdout(&out);
    assert_eq!(v["per_identity"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_tight_tolerance_fails_with_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = finsler(&[
        "verify", "--metrics", "funk2", "--samples", "20", "--tol", "1e-12", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("FAIL") && err.contains("max_resid"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(report["per_identity"].as_array().unwrap().iter().any(|s| s["status"] == "fail"));
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let run = || {
        let mut v = json_stdout(&finsler(&["verify", "--metrics", "randers-berwald", "--samples", "10", "--seed", "7"]));
        v.as_object_mut().unwrap().remove("metadata");
        v
    };
    assert_eq!(run(), run());
}

#[test]
fn verify_csv_has_one_row_per_result() {
    let out = finsler(&["verify", "--metrics", "euclidean", "--samples", "5", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("identity,metric,sample,x,y,residual,scale,tol,passed,error"));
    assert!(text.lines().count() > 5);
}

#[test]
fn classify_funk2() {
    let out = finsler(&["classify", "--metric", "funk2", "--x", "0.3,0"]);
    assert!(out.status.success());
    let v = json_stdout(&out);
    assert_eq!(v["summary"]["e_isotropic"], true);
    assert_eq!(v["summary"]["S"], "isotropic");
    assert!((v["summary"]["c"].as_f64().unwrap() - 1.5).abs() < 1e-6);
    let kinds: Vec<&str> = v["verdicts"].as_array().unwrap().iter().map(|d| d["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["e_isotropic", "S_weakly_isotropic", "S_almost_isotropic", "S_isotropic"]);
}

#[test]
fn classify_rejects_too_few_directions() {
    let out = finsler(&["classify", "--metric", "funk3", "--x", "0,0,0", "--dirs", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn geodesic_csv_conserves_f() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("geo.csv");
    let out = finsler(&[
        "geodesic", "--metric", "sphere", "--x", "0,0", "--y", "1,0", "--steps", "20", "--dt", "0.02", "--format", "csv",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header = rd.headers().unwrap().clone();
    assert_eq!(header.iter().collect::<Vec<_>>(), ["t", "x_1", "x_2", "y_1", "y_2", "F"]);
    let fs: Vec<f64> = rd.records().map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert_eq!(fs.len(), 21);
    assert!(fs.iter().all(|f| (f - fs[0]).abs() < 1e-6));
}

#[test]
fn scan_flags_points_outside_the_domain() {
    let out = finsler(&["scan", "--metric", "funk2", "--grid", "2", "--lo", "-0.6,0", "--hi", "0,0", "--format", "csv"]);
    assert!(out.status.success());
    let mut rd = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rd.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let outside: Vec<bool> = rows.iter().map(|r| r[col("x_1")].parse::<f64>().unwrap() < -0.5).collect();
    for (r, out) in rows.iter().zip(&outside) {
        assert_eq!(r[col("error")].contains("domain"), *out);
        assert_eq!(&r[col("S")], if *out { "" } else { "isotropic" });
    }
}

#[test]
fn metric_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    std::fs::write(
        &path,
        "name = \"flat\"\nfamily = \"minkowski\"\ndimension = 2\nexpression = \"sqrt(y1^2 + 2*y2^2)\"\n",
    )
    .unwrap();
    let out = finsler(&["eval", "--metric", path.to_str().unwrap(), "--x", "0,0", "--y", "0,1", "--quantities", "F"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f = json_stdout(&out)["quantities"]["F"].as_f64().unwrap();
    assert!((f - 2f64.sqrt()).abs() < 1e-12);
}
