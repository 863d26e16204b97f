use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hetsar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetsar"))
        .args(args)
        .output()
        .expect("run hetsar")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

struct Emitted {
    dir: TempDir,
    report: PathBuf,
}

impl Emitted {
    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }
}

fn simulate(scenario: &str, extra: &[&str]) -> Emitted {
    let dir = TempDir::new().unwrap();
    let scen = dir.path().join("scenario.json");
    fs::write(&scen, scenario).unwrap();
    let report = dir.path().join("report.json");
    let data = dir.path().join("data");
    let mut args = vec!["simulate", "--scenario", p(&scen), "--out", p(&report), "--emit-data", p(&data)];
    args.extend_from_slice(extra);
    let out = hetsar(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    Emitted { dir, report }
}

const SMALL: &str = r#"{"layout":{"kind":"grid_rook","rows":10,"cols":10},"rho":0.4,"replicates":3,"seed":11}"#;

#[test]
fn emitted_replicate_refits_to_recorded_estimates() {
    let sim = simulate(SMALL, &[]);
    let fit = sim.dir.path().join("fit.json");
    let d = sim.data();
    let out = hetsar(&[
        "fit",
        "--data",
        p(&d.join("replicate_0000.csv")),
        "--spec",
        p(&d.join("spec_H_AM_SAR.json")),
        "--weights",
        p(&d.join("weights.json")),
        "--out",
        p(&fit),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&sim.report);
    let rec = &report["estimators"][0]["replicates"][0];
    let doc = read_json(&fit);
    assert_eq!(doc["fit"]["rho"], rec["rho"]);
    assert_eq!(doc["mean_coefficients"][1]["estimate"], rec["beta1"]);
    assert_eq!(doc["scale_coefficients"][1]["estimate"], rec["alpha1"]);
    assert_eq!(doc["summary"]["mse"], rec["mse"]);
    // Every unpenalized coefficient carries an SE, and digests are present.
    for row in doc["mean_coefficients"].as_array().unwrap() {
        assert!(row["se"].as_f64().unwrap() > 0.0);
    }
    for key in ["data_sha256", "spec_sha256", "weights_sha256"] {
        assert_eq!(doc["provenance"][key].as_str().unwrap().len(), 64);
    }
    assert_eq!(doc["format_version"], "1.0");
}

#[test]
fn fit_is_byte_identical_across_runs() {
    let sim = simulate(SMALL, &[]);
    let d = sim.data();
    let run = |name: &str| {
        let out_path = sim.dir.path().join(name);
        let out = hetsar(&[
            "fit",
            "--data",
            p(&d.join("replicate_0001.csv")),
            "--spec",
            p(&d.join("spec_H_AM_SAR.json")),
            "--weights",
            p(&d.join("weights.json")),
            "--out",
            p(&out_path),
        ]);
        assert_eq!(code(&out), 0);
        fs::read(out_path).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn report_does_not_depend_on_thread_count() {
    let one = simulate(SMALL, &["--threads", "1"]);
    let two = simulate(SMALL, &["--threads", "2"]);
    assert_eq!(fs::read(&one.report).unwrap(), fs::read(&two.report).unwrap());
    let mse = fs::read_to_string(one.dir.path().join("report.mse.csv")).unwrap();
    assert!(mse.starts_with("replicate,H_AM_SAR\n"));
    assert_eq!(mse.lines().count(), 4);
}

#[test]
fn single_replicate_reports_no_sd() {
    let sim = simulate(
        r#"{"layout":{"kind":"grid_rook","rows":8,"cols":8},"rho":0.2,"replicates":1}"#,
        &[],
    );
    let report = read_json(&sim.report);
    for param in report["estimators"][0]["parameters"].as_array().unwrap() {
        assert!(param.get("sd").is_none_or(Value::is_null), "{param}");
        assert!(param["mean"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn negative_rho_grid_study_runs_through_the_cli() {
    let sim = simulate(
        r#"{"layout":{"kind":"grid_rook","rows":12,"cols":12},"rho":-0.4,"replicates":100,"seed":2024}"#,
        &[],
    );
    let report = read_json(&sim.report);
    let rho = &report["estimators"][0]["parameters"][0];
    assert_eq!(rho["parameter"], "rho");
    let mean = rho["mean"].as_f64().unwrap();
    assert!((-0.43..=-0.37).contains(&mean), "mean rho {mean}");
}

#[test]
fn invalid_scenario_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let scen = dir.path().join("s.json");
    fs::write(&scen, r#"{"layout":{"kind":"grid_rook","rows":5,"cols":5},"rho":1.5}"#).unwrap();
    let out = hetsar(&["simulate", "--scenario", p(&scen), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 1);
    fs::write(&scen, r#"{"layout":{"kind":"grid_rook","rows":5,"cols":5},"rho":0.1,"replicates":0}"#).unwrap();
    let out = hetsar(&["simulate", "--scenario", p(&scen), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 1);
}

fn write_grid_weights(dir: &Path, rows: usize, cols: usize) -> PathBuf {
    let w = dir.join("w.json");
    fs::write(&w, format!(r#"{{"kind":"grid_rook","rows":{rows},"cols":{cols}}}"#)).unwrap();
    w
}

#[test]
fn missing_values_are_listed() {
    let dir = TempDir::new().unwrap();
    let w = write_grid_weights(dir.path(), 2, 3);
    let data = dir.path().join("d.csv");
    fs::write(&data, "y,x\n1,2\n,3\n2,4\n3,NA\n1,1\n2,2\n").unwrap();
    let spec = dir.path().join("m.json");
    fs::write(&spec, r#"{"response":"y","mean":{"linear":["x"]}}"#).unwrap();
    let out = hetsar(&[
        "fit", "--data", p(&data), "--spec", p(&spec), "--weights", p(&w), "--out",
        p(&dir.path().join("f.json")),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2, 4"), "{err}");
}

#[test]
fn non_converged_fit_still_writes_document() {
    let sim = simulate(SMALL, &[]);
    let d = sim.data();
    let fit = sim.dir.path().join("fit.json");
    let out = hetsar(&[
        "fit",
        "--data",
        p(&d.join("replicate_0000.csv")),
        "--spec",
        p(&d.join("spec_H_AM_SAR.json")),
        "--weights",
        p(&d.join("weights.json")),
        "--out",
        p(&fit),
        "--max-outer",
        "1",
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(read_json(&fit)["converged"], false);
}

#[test]
fn log_response_column_is_an_ordinary_response() {
    // Log responses are supplied as an already transformed column.
    let dir = TempDir::new().unwrap();
    let w = write_grid_weights(dir.path(), 6, 6);
    let mut csv = String::from("ln_price,rooms\n");
    for i in 0..36 {
        let rooms = (i % 5) as f64 + 1.0;
        let price = (1.0 + 0.3 * rooms + 0.05 * ((i * 7) % 11) as f64).exp();
        csv.push_str(&format!("{},{}\n", price.ln(), rooms));
    }
    let data = dir.path().join("d.csv");
    fs::write(&data, csv).unwrap();
    let spec = dir.path().join("m.json");
    fs::write(&spec, r#"{"response":"ln_price","mean":{"linear":["rooms"]}}"#).unwrap();
    let fit = dir.path().join("f.json");
    let out = hetsar(&["fit", "--data", p(&data), "--spec", p(&spec), "--weights", p(&w), "--out", p(&fit)]);
    assert!(matches!(code(&out), 0 | 3), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&fit);
    assert_eq!(doc["mean_coefficients"][1]["name"], "rooms");
}

#[test]
fn impacts_table_and_errors() {
    let sim = simulate(SMALL, &[]);
    let d = sim.data();
    let fit = sim.dir.path().join("fit.json");
    let weights = d.join("weights.json");
    let out = hetsar(&[
        "fit",
        "--data",
        p(&d.join("replicate_0002.csv")),
        "--spec",
        p(&d.join("spec_H_AM_SAR.json")),
        "--weights",
        p(&weights),
        "--out",
        p(&fit),
    ]);
    assert_eq!(code(&out), 0);
    let imp = sim.dir.path().join("imp.json");
    let out = hetsar(&["impacts", "--fit", p(&fit), "--weights", p(&weights), "--variable", "x2", "--out", p(&imp)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("direct") && stdout.contains("x2"));
    let doc = read_json(&imp);
    let rho = doc["rho"].as_f64().unwrap();
    let i = &doc["impacts"];
    let total = i["total"].as_f64().unwrap();
    let coef = i["coefficient"].as_f64().unwrap();
    assert!((total * (1.0 - rho) - coef).abs() < 1e-10);

    for (var, want) in [("x3", 2), ("s(x3)", 2), ("(Intercept)", 2), ("nope", 1)] {
        let out = hetsar(&["impacts", "--fit", p(&fit), "--weights", p(&weights), "--variable", var]);
        assert_eq!(code(&out), want, "{var}");
    }
    // Scale-only regressor.
    let mut doc = read_json(&fit);
    doc["fit"]["spec"]["scale"]["linear"] = serde_json::json!(["x2", "z"]);
    let edited = sim.dir.path().join("edited.json");
    fs::write(&edited, serde_json::to_vec(&doc).unwrap()).unwrap();
    let out = hetsar(&["impacts", "--fit", p(&edited), "--weights", p(&weights), "--variable", "z"]);
    assert_eq!(code(&out), 2);
    // Unknown major version.
    doc["format_version"] = "2.0".into();
    fs::write(&edited, serde_json::to_vec(&doc).unwrap()).unwrap();
    let out = hetsar(&["impacts", "--fit", p(&edited), "--weights", p(&weights), "--variable", "x2"]);
    assert_eq!(code(&out), 1);
    // Weights that differ from the fit's.
    let other = write_grid_weights(sim.dir.path(), 20, 5);
    let out = hetsar(&["impacts", "--fit", p(&fit), "--weights", p(&other), "--variable", "x2"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn moran_scatter_and_preconditions() {
    let dir = TempDir::new().unwrap();
    let w = write_grid_weights(dir.path(), 5, 5);
    let mut csv = String::from("v,c,s\n");
    for i in 0..25 {
        csv.push_str(&format!("{},1,{}\n", (i / 5 + i % 5) % 2, if i == 3 { "abc" } else { "0" }));
    }
    let data = dir.path().join("d.csv");
    fs::write(&data, csv).unwrap();
    let scatter = dir.path().join("scatter.csv");
    let res = dir.path().join("moran.json");
    let out = hetsar(&[
        "moran", "--data", p(&data), "--column", "v", "--weights", p(&w), "--permutations", "99", "--seed", "7",
        "--scatter", p(&scatter), "--out", p(&res),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&scatter).unwrap();
    assert!(text.starts_with("value,lag\n"));
    assert_eq!(text.lines().count(), 26);
    let doc = read_json(&res);
    assert!((doc["statistic"].as_f64().unwrap() + 1.0).abs() < 1e-12);

    let base = ["moran", "--data", p(&data), "--weights", p(&w), "--seed", "7"];
    for (column, perms, want) in [("v", "98", 1), ("c", "99", 1), ("s", "99", 1), ("missing", "99", 1)] {
        let mut args = base.to_vec();
        args.extend(["--column", column, "--permutations", perms]);
        assert_eq!(code(&hetsar(&args)), want, "{column} {perms}");
    }
}
