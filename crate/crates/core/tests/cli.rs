use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dilute-bose");

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run-output.schema.json");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

fn run(args: &[&str]) -> (i32, Value) {
    let out = Command::new(BIN).args(args).env_remove("DILUTE_BOSE_THREADS").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}"));
    let v = schema();
    let errs: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errs.is_empty(), "{args:?}: {errs:?}");
    (out.status.code().unwrap(), doc)
}

fn ok(args: &[&str]) -> Value {
    let (code, doc) = run(args);
    assert_eq!(code, 0, "{doc}");
    doc
}

#[test]
fn every_subcommand_validates() {
    let cases: &[&[&str]] = &[
        &["scattering", "--N", "10"],
        &["spectrum", "--N", "10", "--cutoff", "3"],
        &["elambda", "--max-m", "24"],
        &["constants", "--N", "10", "--cutoff", "3", "--alpha", "2"],
        &["logterm", "--mode", "integral"],
        &["lhy", "--rho", "1e-7"],
    ];
    for args in cases {
        let doc = ok(args);
        assert_eq!(doc["command"], args[0]);
    }
}

#[test]
fn energy_terms_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.conf");
    std::fs::write(&cfg, "n = 12\nmax_m = 24\nsecond_order_k = 8\n").unwrap();
    let doc = ok(&["energy", "--config", cfg.to_str().unwrap()]);
    let r = &doc["result"];
    let total = r["total"].as_f64().unwrap();
    let sum: f64 = ["term1", "term2", "term3", "term4"].iter().map(|k| r[k].as_f64().unwrap()).sum();
    assert!((total - sum).abs() <= 1e-12 * total.abs());
}

#[test]
fn invalid_input_exit_code_and_field() {
    let (code, doc) = run(&["scattering", "--N", "0"]);
    assert_eq!(code, 3);
    assert_eq!(doc["error"]["code"], "invalid_input");
    assert_eq!(doc["error"]["field"], "n");
}

#[test]
fn usage_error_exit_code() {
    let (code, doc) = run(&["nonsense"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["code"], "usage");
}

#[test]
fn out_and_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let csv = dir.path().join("t.csv");
    let status = Command::new(BIN)
        .args(["spectrum", "--N", "10", "--cutoff", "3", "--out"])
        .arg(&out)
        .arg("--csv")
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(schema().is_valid(&doc));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    assert!(rdr.headers().unwrap().len() >= 2);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert!(!rows.is_empty());
    for row in &rows {
        for f in row.iter() {
            f.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn json_and_kv_configs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let kv = dir.path().join("c.conf");
    std::fs::write(&kv, "# barrier\npotential.kind = square_barrier\npotential.v0 = 3\nn = 14\nell = 0.4\n").unwrap();
    let a = ok(&["scattering", "--config", kv.to_str().unwrap()]);
    let js = dir.path().join("c.json");
    std::fs::write(&js, serde_json::to_string(&a["config"]).unwrap()).unwrap();
    let b = ok(&["scattering", "--config", js.to_str().unwrap()]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["result_hash"], b["result_hash"]);
    assert_eq!(a["config"]["potential"]["v0"], 3.0);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let kv = dir.path().join("c.conf");
    std::fs::write(&kv, "n = 14\n").unwrap();
    let doc = ok(&["scattering", "--config", kv.to_str().unwrap(), "--N", "16"]);
    assert_eq!(doc["config"]["n"], 16);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let kv = dir.path().join("c.conf");
    std::fs::write(&kv, "bogus = 1\n").unwrap();
    let (code, doc) = run(&["scattering", "--config", kv.to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(doc.get("error").is_some());
}

#[test]
fn threads_do_not_change_results() {
    let r = |t: &str| ok(&["constants", "--N", "10", "--cutoff", "3", "--threads", t])["result_hash"].clone();
    assert_eq!(r("1"), r("8"));
    let env = |t: &str| {
        let out = Command::new(BIN)
            .args(["logterm", "--mode", "lattice"])
            .env("DILUTE_BOSE_THREADS", t)
            .output()
            .unwrap();
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(doc["result_hash"].is_string(), "{doc}");
        doc["result_hash"].clone()
    };
    assert_eq!(env("1"), env("4"));
}

#[test]
fn tabulated_potential_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("v.txt");
    let rows: String = (0..=20).map(|i| format!("{} {}\n", i as f64 * 0.05, 2.0)).collect();
    std::fs::write(&table, rows).unwrap();
    let doc = ok(&["scattering", "--potential", "tabulated", "--table", table.to_str().unwrap()]);
    let a = doc["result"]["a"].as_f64().unwrap();
    let exact = 1.0 - 1f64.tanh();
    assert!((a - exact).abs() < 1e-3, "{a} vs {exact}");
}
