use std::fs;
use std::process::{Command, Output};

fn censorlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_censorlab")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let o = censorlab(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// Data rows as maps from column name to value.
fn rows(csv: &str) -> Vec<Vec<(String, String)>> {
    let (schema, body) = csv.split_once('\n').unwrap();
    assert!(schema.starts_with("# censorlab "));
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn field<'a>(row: &'a [(String, String)], name: &str) -> &'a str {
    &row.iter().find(|(k, _)| k == name).unwrap().1
}

#[test]
fn gap_matches_closed_forms() {
    let out = stdout(&["gap", "--builder", "hide_seek_C,hide_seek_Cprime", "--N", "5"]);
    let r = rows(&out);
    assert_eq!(r.len(), 2);
    assert!(field(&r[0], "lambda").starts_with("0.039064"));
    assert!(field(&r[1], "lambda").starts_with("0.008858"));
}

#[test]
fn gap_sweep_orders_by_grid() {
    let r = rows(&stdout(&["gap", "--builder", "hide_seek_C,hide_seek_Cprime", "--N", "4:9"]));
    assert_eq!(r.len(), 12);
    let ns: Vec<&str> = r.iter().map(|x| field(x, "N")).collect();
    assert_eq!(ns[..6], ["4", "5", "6", "7", "8", "9"]);
    for i in 1..6 {
        let c: f64 = field(&r[i], "lambda").parse().unwrap();
        let p: f64 = field(&r[i + 6], "lambda").parse().unwrap();
        assert!(c > p);
    }
}

#[test]
fn multerr_at_depth_one_and_zero() {
    let r = rows(&stdout(&["multerr", "--builder", "hide_seek_C,hide_seek_Cprime", "--N", "5", "--d", "0:1"]));
    let eps: Vec<f64> = r.iter().map(|x| field(x, "eps_m").parse().unwrap()).collect();
    assert_eq!(eps[0], eps[2]);
    assert!(eps[1] > eps[3]);
}

#[test]
fn multerr_budget_refusal() {
    let o = censorlab(&["multerr", "--builder", "hide_seek_C", "--N", "4", "--bisection", "--budget-bytes", "1000"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn pigment_final_amount() {
    let r = rows(&stdout(&["pigment", "--builder", "hide_seek_C", "--N", "5"]));
    let last = r.iter().rfind(|x| field(x, "site") == "0").unwrap();
    assert_eq!(field(last, "amount_fraction"), "5/16");
    assert_eq!(field(last, "amount_float"), "0.3125");
}

#[test]
fn graphgap_sweep() {
    let r = rows(&stdout(&["graphgap", "--lollipop", "10", "--k-sweep", "3:7"]));
    assert_eq!(r.len(), 6);
    let path: f64 = field(&r[0], "gap_raw").parse().unwrap();
    assert!(r[1..].iter().any(|x| field(x, "gap_raw").parse::<f64>().unwrap() < path));
}

#[test]
fn search_emits_replayable_lines() {
    let out = stdout(&["search", "--N", "5", "--max-gates", "6", "--metric", "eigen_gap", "--samples", "300"]);
    assert!(out.lines().count() >= 1);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["margin"].as_f64().unwrap() > 0.0);
        assert!(v["architecture"]["gates"].is_array());
    }
    assert_eq!(out, stdout(&["search", "--N", "5", "--max-gates", "6", "--metric", "eigen_gap", "--samples", "300"]));
}

#[test]
fn arch_file_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let arch = dir.path().join("a.json");
    fs::write(&arch, r#"{"site_dims":[2,2,2],"gates":[{"support":[0,1]},{"support":[1,2]},{"support":[0,1]}]}"#).unwrap();
    let out = dir.path().join("gap.csv");
    stdout(&["gap", "--arch", arch.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let r = rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(field(&r[0], "lambda"), "0.16");

    fs::write(&arch, r#"{"site_dims":[2,2],"gates":[{"support":[0,5]}]}"#).unwrap();
    let o = censorlab(&["gap", "--arch", arch.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("gates[0]"));
}

#[test]
fn uncovered_and_unknown_inputs_fail() {
    assert!(!censorlab(&["gap", "--builder", "nope", "--N", "3"]).status.success());
    assert!(!censorlab(&["gap", "--builder", "hide_seek_C"]).status.success());
    assert!(!censorlab(&["depth", "--N", "7:3"]).status.success());
}

#[test]
fn depth_table() {
    let r = rows(&stdout(&["depth", "--N", "5"]));
    assert_eq!(field(&r[0], "d"), "10");
    assert_eq!(field(&r[0], "specialized_d"), "10");
    assert_eq!(field(&r[0], "prefactor_ratio"), "32");
}

#[test]
fn reduced_censoring_table() {
    let r = rows(&stdout(&["censoring-table", "--trials", "10"]));
    assert_eq!(r.len(), 12);
    assert!(r.iter().all(|x| field(x, "match") == "yes"));
}
