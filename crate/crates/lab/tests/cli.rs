use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cauchy-lab");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn cauchy-lab")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.push("--json");
    let out = run(&all);
    let v = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}\n{}", stdout(&out), String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), v)
}

fn num(v: &Value, path: &str) -> f64 {
    v.pointer(path).and_then(Value::as_f64).unwrap_or_else(|| panic!("{path} missing in {v}"))
}

/// Validator for the subset of JSON Schema used by schemas/report.schema.json.
struct Schema {
    root: Value,
}

impl Schema {
    fn load() -> Self {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/report.schema.json");
        Schema { root: serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap() }
    }

    fn check(&self, v: &Value) -> Result<(), String> {
        self.node(&self.root, v, "$")
    }

    fn type_ok(ty: &str, v: &Value) -> bool {
        match ty {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            other => panic!("schema type {other}"),
        }
    }

    fn node(&self, s: &Value, v: &Value, at: &str) -> Result<(), String> {
        if let Some(r) = s.get("$ref").and_then(Value::as_str) {
            let target = self.root.pointer(r.trim_start_matches('#')).ok_or(format!("bad $ref {r}"))?;
            return self.node(target, v, at);
        }
        match s.get("type") {
            Some(Value::String(t)) if !Self::type_ok(t, v) => return Err(format!("{at}: expected {t}, got {v}")),
            Some(Value::Array(ts)) if !ts.iter().any(|t| Self::type_ok(t.as_str().unwrap(), v)) => {
                return Err(format!("{at}: expected one of {ts:?}, got {v}"))
            }
            _ => {}
        }
        if let Some(c) = s.get("const") {
            if c != v {
                return Err(format!("{at}: expected {c}, got {v}"));
            }
        }
        if let Some(Value::Array(opts)) = s.get("enum") {
            if !opts.contains(v) {
                return Err(format!("{at}: {v} not in {opts:?}"));
            }
        }
        if let (Some(Value::Array(req)), Some(obj)) = (s.get("required"), v.as_object()) {
            for k in req {
                if !obj.contains_key(k.as_str().unwrap()) {
                    return Err(format!("{at}: missing {k}"));
                }
            }
        }
        if let (Some(Value::Object(props)), Some(obj)) = (s.get("properties"), v.as_object()) {
            for (k, sub) in props {
                if let Some(child) = obj.get(k) {
                    self.node(sub, child, &format!("{at}.{k}"))?;
                }
            }
        }
        if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
            for (i, child) in arr.iter().enumerate() {
                self.node(items, child, &format!("{at}[{i}]"))?;
            }
        }
        if let Some(Value::Array(all)) = s.get("allOf") {
            for sub in all {
                self.node(sub, v, at)?;
            }
        }
        if let Some(cond) = s.get("if") {
            if self.node(cond, v, at).is_ok() {
                if let Some(then) = s.get("then") {
                    self.node(then, v, at)?;
                }
            }
        }
        Ok(())
    }
}

#[test]
fn check_exit_codes() {
    let out = run(&["check", "--sigma", "cev:p=2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("limit 0.5"), "{}", stdout(&out));
    assert_eq!(run(&["check", "--sigma", "x"]).status.code(), Some(0));
    let out = run(&["check", "--sigma", "-x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert_eq!(run(&["check", "--sigma", "x*sqrt(1+log(1+x))", "--numeric"]).status.code(), Some(3));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["solve", "--bc", "neumann"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["defect", "--sigma", "x", "--strict-repro"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--config", "/nonexistent/scenario.ini"]).status.code(), Some(1));
}

#[test]
fn defect_examples() {
    let (code, v) = json(&["defect", "--sigma", "cev:p=2", "--x", "1", "--T", "1", "--paths", "1000000", "--seed", "7"]);
    assert_eq!(code, 0);
    let (lo, hi) = (num(&v, "/result/ci95/0"), num(&v, "/result/ci95/1"));
    assert!(lo <= 0.317311 && 0.317311 <= hi, "{lo} {hi}");

    let (_, v) = json(&["defect", "--sigma", "cev:p=2", "--x", "0.5", "--T", "1", "--seed", "7"]);
    let (lo, hi) = (num(&v, "/result/ci95/0"), num(&v, "/result/ci95/1"));
    assert!(lo <= 0.022750 && 0.022750 <= hi, "{lo} {hi}");

    let (code, v) = json(&["defect", "--sigma", "x", "--x", "1", "--T", "1", "--paths", "20000", "--seed", "7"]);
    assert_eq!(code, 0);
    let (lo, hi) = (num(&v, "/result/ci95/0"), num(&v, "/result/ci95/1"));
    assert!(lo <= 0.0 && 0.0 <= hi, "{lo} {hi}");
    assert!(!v["warnings"].as_array().unwrap().is_empty());

    // strict local martingale without a closed-form sampler needs the explicit opt-in
    assert_eq!(run(&["defect", "--sigma", "cev:p=1.5", "--seed", "1"]).status.code(), Some(1));
}

#[test]
fn solve_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("gbm.ini");
    std::fs::write(
        &ini,
        "sigma = x\npayoff = call:K=1\nT = 1\n\n[pde]\nx_max = 16\nx_intervals = 800\nt_intervals = 800\n",
    )
    .unwrap();
    let (_, v) = json(&["solve", "--config", ini.to_str().unwrap()]);
    assert!((num(&v, "/result/probes/0/1") - 0.382925).abs() < 1e-3);

    for (bc, want, tol) in [("dirichlet-payoff", 1.0, 1e-10), ("zero-gamma", 1.0, 1e-10), ("minimal-profile", 0.682689, 5e-3)] {
        let (_, v) = json(&["solve", "--sigma", "cev:p=2", "--payoff", "identity", "--bc", bc]);
        let u = num(&v, "/result/probes/0/1");
        assert!((u - want).abs() < tol, "{bc}: {u}");
    }
    let out = run(&["solve", "--sigma", "cev:p=2", "--payoff", "identity", "--bc", "dirichlet-payoff"]);
    assert!(stdout(&out).contains("u(1, 0) = 1.000000"), "{}", stdout(&out));
}

#[test]
fn nonuniq_examples() {
    let (_, v) = json(&["nonuniq", "--sigma", "x", "--payoff", "call:K=1"]);
    assert_eq!(v["result"]["trend"]["trend"], "vanishing_gap");

    let (_, v) = json(&["nonuniq", "--sigma", "cev:p=2", "--payoff", "identity"]);
    assert_eq!(v["result"]["trend"]["trend"], "persistent_gap");
    assert!((num(&v, "/result/trend/level") - 0.317311).abs() < 0.05);

    let (_, v) = json(&["nonuniq", "--sigma", "x", "--payoff", "const:1"]);
    for rung in v["result"]["rungs"].as_array().unwrap() {
        assert_eq!(rung["max_gap"].as_f64(), Some(0.0));
    }
}

#[test]
fn every_command_matches_schema() {
    let schema = Schema::load();
    let cases: &[&[&str]] = &[
        &["check", "--sigma", "cev:p=2"],
        &["check", "--sigma", "x^1.5", "--numeric"],
        &["defect", "--sigma", "cev:p=2", "--paths", "1000", "--seed", "1"],
        &["solve", "--sigma", "x", "--payoff", "put:K=1", "--x-intervals", "100", "--t-intervals", "50"],
        &["nonuniq", "--sigma", "x", "--payoff", "call:K=1", "--ladder", "4,8"],
        &["psi", "--sigma", "cev:p=2"],
        &["psi", "--sigma", "x", "--psi-xs", "1,2"],
        &["simulate", "--sigma", "cev:p=1.5", "--paths", "200", "--steps-per-unit", "100", "--seed", "1"],
        &["psibound", "--sigma", "cev:p=2", "--paths", "500", "--seed", "1"],
        &["validate", "--sigma", "sqrt(x)", "--payoff", "put:K=1"],
    ];
    for args in cases {
        let (_, v) = json(args);
        schema.check(&v).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    }
    // the validator does reject
    let (_, mut v) = json(&["check", "--sigma", "x"]);
    v["result"]["verdict"] = Value::from("maybe");
    assert!(schema.check(&v).is_err());
}

#[test]
fn embedded_config_reproduces_run() {
    // no seed: one is drawn, recorded, and replaying the recorded config matches
    let (_, first) = json(&["defect", "--sigma", "cev:p=2", "--paths", "2000"]);
    assert!(first["seed"].is_u64());
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("replay.ini");
    std::fs::write(&ini, first["config_ini"].as_str().unwrap()).unwrap();
    let (_, second) = json(&["defect", "--config", ini.to_str().unwrap()]);
    assert_eq!(first["result"], second["result"]);
    assert_eq!(first["config"], second["config"]);
}

#[test]
fn artifacts_written() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "nonuniq", "--sigma", "x", "--payoff", "call:K=1", "--ladder", "4,8", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let gaps = std::fs::read_to_string(out_dir.join("gaps.csv")).unwrap();
    assert!(gaps.starts_with("x_max,gap\n"));
    assert!(!gaps.contains('\r'));
    assert_eq!(gaps.lines().count(), 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tool"], "cauchy-lab");
    assert_eq!(report["command"], "nonuniq");

    let out_dir = dir.path().join("sim");
    run(&["simulate", "--sigma", "cev:p=2", "--paths", "50", "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    let terminal = std::fs::read_to_string(out_dir.join("terminal.csv")).unwrap();
    assert!(terminal.starts_with("x_T\n"));
    assert_eq!(terminal.lines().count(), 51);

    let out_dir = dir.path().join("check");
    run(&["check", "--sigma", "x", "--out", out_dir.to_str().unwrap()]);
    assert!(std::fs::read_to_string(out_dir.join("partial_integrals.csv")).unwrap().starts_with("B,partial\n"));
    let out_dir = dir.path().join("psi");
    run(&["psi", "--sigma", "x", "--out", out_dir.to_str().unwrap()]);
    assert!(std::fs::read_to_string(out_dir.join("psi.csv")).unwrap().starts_with("x,ratio\n"));
    let out_dir = dir.path().join("solve");
    run(&["solve", "--sigma", "x", "--x-intervals", "10", "--t-intervals", "5", "--out", out_dir.to_str().unwrap()]);
    let surface = std::fs::read_to_string(out_dir.join("surface.csv")).unwrap();
    assert!(surface.starts_with("x,t,u\n"));
    assert_eq!(surface.lines().count(), 1 + 11 * 6);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("s.ini");
    std::fs::write(&ini, "sigma = cev:p=2\n[mc]\nseed = 5\npaths = 100\n").unwrap();
    let (code, v) = json(&["check", "--config", ini.to_str().unwrap(), "--sigma", "x"]);
    assert_eq!(code, 0);
    assert_eq!(v["config"]["sigma"], "x");
    assert_eq!(v["config"]["mc"]["paths"], 100);
    let (_, v) = json(&["defect", "--config", ini.to_str().unwrap(), "--paths", "300"]);
    assert_eq!(v["result"]["n_paths"], 300);
    assert_eq!(v["seed"], 5);
}
