use std::process::{Command, Output};

use serde_json::Value;

fn epibundle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epibundle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn run_ok(args: &[&str]) -> Value {
    let out = epibundle(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    report(&out)
}

#[test]
fn gtd_check_abs_3_2() {
    let doc = run_ok(&["gtd-check", "--fn", "abs_3_2", "--x", "0", "--v", "0", "--lambda", "0.1", "--r-level", "0"]);
    assert_eq!(doc["schema"], 1);
    assert_eq!(doc["verdicts"]["decision"], "gtd");
    assert_eq!(doc["verdicts"]["form"]["l_dim"], 0);
    assert_eq!(doc["verdicts"]["form"]["indicator_origin"], true);
    assert_eq!(doc["config"]["function"], "abs_3_2");
    assert_eq!(doc["seed"], 0);
    assert!(doc["version"].is_string());
}

fn coefficients(doc: &Value) -> Vec<Option<f64>> {
    doc["verdicts"]["elements"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["coefficient"].as_f64())
        .collect()
}

#[test]
fn old_bundle_of_step_quad_contains_zero_form() {
    let doc = run_ok(&["quad-bundle", "--fn", "step_quad", "--x", "0", "--v", "0", "--attentive", "false"]);
    let cs = coefficients(&doc);
    assert_eq!(cs.len(), 3);
    assert!(cs.iter().any(|c| c.is_some_and(|c| c.abs() < 1e-3)));
    assert!(cs.iter().any(|c| c.is_some_and(|c| (c - 1.0).abs() < 1e-3)));
    assert!(cs.iter().any(|c| c.is_none()));

    let doc = run_ok(&["quad-bundle", "--fn", "step_quad", "--x", "0", "--v", "0"]);
    let cs = coefficients(&doc);
    assert_eq!(cs.len(), 2);
    assert!(!cs.iter().any(|c| c.is_some_and(|c| c.abs() < 1e-3)));
}

#[test]
fn piecewise_text_matches_registry() {
    let doc = run_ok(&["quad-bundle", "--fn", "x^2 on [0,inf); 1 on (-inf,0)", "--route", "envelope"]);
    assert_eq!(coefficients(&doc).len(), 2);
    assert_eq!(doc["evidence"]["function"]["source"], "piecewise");
}

#[test]
fn corpus_run_all_passes() {
    let out = epibundle(&["corpus", "run", "--all"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = report(&out);
    assert_eq!(doc["verdicts"]["passed"], true);
    assert_eq!(doc["verdicts"]["cases"].as_array().unwrap().len(), 15);
}

#[test]
fn corpus_list_and_export() {
    let doc = run_ok(&["corpus", "list"]);
    let names: Vec<&str> = doc["verdicts"]["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"osc_quartic"));
    let doc = run_ok(&["corpus", "export", "abs_3_2"]);
    assert_eq!(doc["verdicts"]["name"], "abs_3_2");
    let d2 = doc["verdicts"]["expected"]["d2"].as_array().unwrap();
    assert!(d2.iter().any(|r| r["d2"] == "+inf"));
}

#[test]
fn argument_errors_exit_2() {
    for args in [
        &["gtd-check", "--fn", "no_such_function"][..],
        &["envelope", "--fn", "sq_sgn", "--lambda", "0.9"],
        &["gtd-check", "--fn", "abs_3_2", "--v", "1"],
        &["gtd-check", "--fn", "abs_3_2", "--x", "0,0"],
        &["quad-bundle", "--fn", "x^2 on [0,1", "--route", "envelope"],
        &["svar-cert", "--fn", "x^2 on (-inf,inf)", "--s", "0"],
        &["corpus", "export", "nope"],
    ] {
        let out = epibundle(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let doc = report(&out);
        assert!(doc["error"]["kind"].is_string(), "{args:?}");
        assert!(doc["error"]["message"].is_string(), "{args:?}");
    }
}

#[test]
fn piecewise_direct_route_and_bad_grad_step() {
    let out = epibundle(&["quad-bundle", "--fn", "x^2 on (-inf,inf)", "--route", "direct", "--grad-step", "1e-5"]);
    // Piecewise oracles carry a finite-difference gradient, so the direct route runs.
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = epibundle(&["hessian-bundle", "--fn", "x^2 on (-inf,inf)", "--grad-step", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_errors_exit_3() {
    let out = epibundle(&["envelope", "--fn", "cubic_shift"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(report(&out)["error"]["kind"], "unbounded");
}

#[test]
fn reports_are_byte_stable() {
    let args = ["quad-bundle", "--fn", "osc_quartic", "--seed", "7", "--random-phases", "4"];
    let a = epibundle(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_epibundle"))
        .args(args)
        .env("EPIBUNDLE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(report(&a)["seed"], 7);
}

#[test]
fn infinities_serialize_as_strings() {
    let doc = run_ok(&["subderiv", "--fn", "abs_3_2", "--w", "1"]);
    assert_eq!(doc["verdicts"]["d2"][0]["lower"], "+inf");
    assert_eq!(doc["verdicts"]["d2"][0]["verdict"], "pos_inf");
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"function": "step_quad", "lambda": 0.2, "seed": 3}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let doc = run_ok(&["quad-bundle", "--config", cfg, "--seed", "5"]);
    assert_eq!(doc["config"]["lambda"], 0.2);
    assert_eq!(doc["seed"], 5);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"function": "step_quad", "lamda": 0.2}"#).unwrap();
    let out = epibundle(&["quad-bundle", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_and_csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("tables");
    let out = epibundle(&[
        "quad-bundle",
        "--fn",
        "step_quad",
        "--json",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["command"], "quad-bundle");
    let mut rdr = csv::Reader::from_path(csv.join("bundle_paths.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().get(0), Some("path"));
    assert!(rdr.records().count() > 10);

    let trace = dir.path().join("trace.csv");
    let out = epibundle(&["envelope", "--fn", "abs_3_2", "--z", "0.3", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["u0", "objective"]);
    assert!(rdr.records().count() > 100);
}

#[test]
fn remaining_subcommands_compute_verdicts() {
    let doc = run_ok(&["envelope", "--fn", "abs_3_2", "--z", "0.3", "--hessian"]);
    assert_eq!(doc["verdicts"]["twice_differentiable"], true);
    let doc = run_ok(&["prox", "--fn", "quad_1", "--z", "1"]);
    let m = doc["verdicts"]["minimizers"][0][0].as_f64().unwrap();
    assert!((m - 1.0 / 1.2).abs() < 1e-8);
    let doc = run_ok(&["hessian-bundle", "--fn", "mixed_power"]);
    assert_eq!(doc["verdicts"]["clusters"].as_array().unwrap().len(), 1);
    let doc = run_ok(&["growth-check", "--fn", "cubic_shift", "--kappa", "1"]);
    assert_eq!(doc["verdicts"]["holds_at_every_radius"], false);
    let doc = run_ok(&["svar-cert", "--fn", "quad_1", "--s", "1"]);
    assert_eq!(doc["verdicts"]["holds"], true);
    let doc = run_ok(&["subderiv", "--fn", "sq_sgn"]);
    assert_eq!(doc["verdicts"]["twice_epi_differentiable"], "yes");
}
