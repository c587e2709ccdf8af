use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revar::sim::{generate_true_parameters, replication_rng, simulate_from};
use revar::{Dims, ErrorFamily};
use tempfile::TempDir;

fn revar(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revar"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("REVAR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// A (2, 3, 1, 4) REVAR series written as CSV with full-precision values.
fn write_series(dir: &Path, t: usize) -> PathBuf {
    let params = generate_true_parameters(Dims::new(2, 3, 1, 4), 3).unwrap();
    let sim = simulate_from(&params, ErrorFamily::Normal, t, &mut replication_rng(9, 0, 0)).unwrap();
    let v = sim.data.values();
    let mut text = String::from("a,b,c,d\n");
    for r in 0..v.nrows() {
        let row: Vec<String> = v.row(r).iter().map(|x| format!("{x}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = dir.join("series.csv");
    fs::write(&path, text).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn error_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "error.json")).unwrap()
}

#[test]
fn fit_all_writes_four_estimate_sets_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 300);
    let out = tmp.path().join("out");
    let o = revar(
        &out,
        &[
            "fit",
            "--model",
            "all",
            "--p",
            "1",
            "--d",
            "2",
            "--u",
            "3",
            data.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for tag in ["olsvar", "rrvar", "evar", "revar"] {
        for part in ["beta", "sigma", "alpha", "se_beta"] {
            assert!(out.join(format!("{tag}_{part}.csv")).exists(), "{tag}_{part}");
        }
    }
    assert!(out.join("revar_phi.csv").exists());
    let summary = read(&out, "summary.csv");
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.starts_with("model,d,u,p,NOP"));
    assert!(summary.contains("REVAR,2,3,1,20,"));

    let beta = read(&out, "revar_beta.csv");
    assert_eq!(beta.lines().next().unwrap(), "a.l1,b.l1,c.l1,d.l1");
    assert_eq!(beta.lines().count(), 5);

    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["command"], "fit");
    assert_eq!(manifest["library_version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["seeds"].is_array());
}

#[test]
fn numeric_outputs_round_trip_exactly() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 200);
    let out = tmp.path().join("out");
    let o = revar(&out, &["fit", "--model", "rrvar", "--d", "2", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let fit: serde_json::Value = serde_json::from_str(&read(&out, "fit.json")).unwrap();
    let beta_csv = read(&out, "rrvar_beta.csv");
    for (r, line) in beta_csv.lines().skip(1).enumerate() {
        for (c, cell) in line.split(',').enumerate() {
            let from_csv: f64 = cell.parse().unwrap();
            let from_json = fit[0]["beta"][r][c].as_f64().unwrap();
            assert_eq!(from_csv.to_bits(), from_json.to_bits());
            assert_eq!(format!("{from_csv}"), cell);
        }
    }
}

#[test]
fn missing_dimension_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 100);
    let out = tmp.path().join("out");
    let o = revar(&out, &["fit", "--model", "revar", "--d", "2", data.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(error_json(&out)["kind"], "usage");
}

#[test]
fn corrupt_csv_names_line_and_column() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.csv");
    fs::write(&path, "x,y\n1,2\n3,oops\n5,6\n").unwrap();
    let out = tmp.path().join("out");
    let o = revar(&out, &["fit", "--model", "olsvar", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["line"], 3);
    assert_eq!(err["column"], "y");
    assert_eq!(err, error_json(&out));
}

#[test]
fn ragged_row_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("ragged.csv");
    fs::write(&path, "x,y\n1,2\n3\n").unwrap();
    let out = tmp.path().join("out");
    let o = revar(&out, &["select", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(error_json(&out)["line"], 3);
}

#[test]
fn empty_file_exits_with_input_error() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("empty.csv");
    fs::write(&path, "").unwrap();
    let out = tmp.path().join("out");
    let o = revar(&out, &["select", "--pmax", "2", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(error_json(&out)["kind"], "input");

    fs::write(&path, "x,y\n").unwrap();
    assert_eq!(code(&revar(&out, &["select", path.to_str().unwrap()])), 2);
}

#[test]
fn missing_input_exits_with_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = revar(&out, &["forecast", tmp.path().join("absent.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(error_json(&out)["kind"], "input");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = revar(tmp.path(), &["fit", "--bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn select_grid_and_sequential_are_labeled() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 400);
    for mode in ["grid", "sequential"] {
        let out = tmp.path().join(mode);
        let o = revar(&out, &["select", "--pmax", "2", "--mode", mode, data.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let line = String::from_utf8(o.stdout).unwrap();
        assert!(line.starts_with("p="), "{line}");
        assert!(line.contains(&format!("mode {mode}")));
        let sel: serde_json::Value = serde_json::from_str(&read(&out, "selection.json")).unwrap();
        assert_eq!(sel["mode"], mode);
        assert!(sel["p"].as_u64().is_some());
        let grid = read(&out, "selection_grid.csv");
        assert!(grid.starts_with("procedure,p,d,u,NOP,loglik,criterion,statistic,df,p_value,failure"));
        assert!(grid.lines().any(|l| l.starts_with("lag,")));
    }
}

#[test]
fn given_rank_mode_requires_d() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 100);
    let out = tmp.path().join("out");
    let o = revar(&out, &["select", "--mode", "given-rank", data.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

const SMALL_SCENARIO: &str = r#"
[[scenario]]
name = "tiny"
d = 1
u = 2
p = 1
q = 3
errors = "sv-mds"
sample_sizes = [150]
replications = 3
se_ratios = false

[[scenario]]
d = 1
u = 1
p = 1
q = 2
sample_sizes = [120]
replications = 2
"#;

#[test]
fn simulate_with_same_seed_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("scenarios.toml");
    fs::write(&cfg, SMALL_SCENARIO).unwrap();
    let mut outputs = Vec::new();
    for (run, threads) in [(1, "1"), (2, "3")] {
        let out = tmp.path().join(format!("run{run}"));
        let o = revar(
            &out,
            &[
                "--threads",
                threads,
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "42",
                "--study",
                "both",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    for name in [
        "monte_carlo.csv",
        "selection_study.csv",
        "simulate.json",
        "manifest.json",
    ] {
        assert_eq!(read(&outputs[0], name), read(&outputs[1], name), "{name}");
    }
    let mc = read(&outputs[0], "monte_carlo.csv");
    assert!(mc.starts_with("scenario,T,model,mean_error,se_mean,r_min,r_max"));
    assert_eq!(mc.lines().count(), 1 + 4 + 4);
    assert!(mc.lines().nth(1).unwrap().starts_with("tiny,150,OLSVAR,"));
    assert!(mc.contains("d1-u1-p1-q2-normal,120,REVAR,"));

    let json: serde_json::Value = serde_json::from_str(&read(&outputs[0], "simulate.json")).unwrap();
    assert_eq!(json[0]["scenario"]["errors"], "sv-mds");
    assert_eq!(json[0]["scenario"]["seed"], 42);
}

#[test]
fn builtin_scenario_parses() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = revar(&out, &["simulate", "--builtin", "no-such-scenario"]);
    assert_eq!(code(&o), 2);
    assert!(error_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("typical-3417-normal"));
}

#[test]
fn bad_scenario_key_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "d = 1\nu = 2\np = 1\nq = 3\nerrors = \"cauchy\"\n").unwrap();
    let out = tmp.path().join("out");
    let o = revar(&out, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn forecast_without_bootstrap_writes_table_layout() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 120);
    let out = tmp.path().join("out");
    let o = revar(
        &out,
        &[
            "forecast",
            "--eval-start",
            "0.8",
            "--horizons",
            "2",
            "--bootstrap",
            "0",
            "--p",
            "1",
            "--d",
            "2",
            "--u",
            "3",
            data.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = read(&out, "forecast.csv");
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "model,d,u,p,NOP,r_avg,RMSFE_1,RMSFE_2,failures");
    let models: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["OLSVAR", "RRVAR", "EVAR", "REVAR"]);
    let json: serde_json::Value = serde_json::from_str(&read(&out, "forecast.json")).unwrap();
    assert_eq!(json["table"]["samples"], 0);
    assert_eq!(json["table"]["t0"], 96);
    assert_eq!(json["dims"]["source"], "given");
}

#[test]
fn forecast_selects_dims_on_the_pre_evaluation_sample() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 150);
    let out = tmp.path().join("out");
    let o = revar(
        &out,
        &[
            "forecast",
            "--horizons",
            "1",
            "--model",
            "revar",
            "--pmax",
            "2",
            "--refit",
            "reuse",
            data.to_str().unwrap(),
        ],
    );
    assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(&out, "forecast.json")).unwrap();
    assert_eq!(json["dims"]["source"], "selected");
    assert_eq!(json["dims"]["lag_selection"]["n"], 112 - 2);
}

#[test]
fn forecast_rejects_bad_eval_start() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 60);
    let out = tmp.path().join("out");
    let o = revar(&out, &["forecast", "--eval-start", "1.5", data.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_reproduces_outputs_bit_identically() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 200);
    let first = tmp.path().join("first");
    let o = revar(
        &first,
        &["fit", "--model", "all", "--d", "1", "--u", "2", data.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0);
    let second = tmp.path().join("second");
    let o = revar(&second, &["replay", first.join("manifest.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read(&first, "manifest.json")).unwrap();
    for name in manifest["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn out_dir_defaults_from_environment() {
    let tmp = TempDir::new().unwrap();
    let data = write_series(tmp.path(), 80);
    let out = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_revar"))
        .args(["fit", "--model", "olsvar", data.to_str().unwrap()])
        .env("REVAR_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(out.join("manifest.json").exists());
}
