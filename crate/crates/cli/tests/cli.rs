use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twostage_cli::report::{read_mse_ratio_csv, read_mse_ratio_json, read_simulation_csv, read_simulation_json};

fn twostage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twostage"))
        .args(args)
        .env_remove("TWOSTAGE_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

#[test]
fn simulate_all_methods_gives_seven_rows() {
    let o = twostage(&["simulate", "--scenario", "config2", "--methods", "all", "--seed", "7", "--reps", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "method,empirical_fwer,fwer_se,power,power_se,mean_F");
    assert_eq!(data.len(), 8);
    assert!(data[1].starts_with("none,"));
    assert!(!text.contains('\r'));
    assert!(text.contains("# seed=7\n"));
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--scenario", "config1", "--seed", "11", "--reps", "30", "--m", "50"];
    let a = twostage(&args);
    let b = twostage(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_threads_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for t in ["1", "4", "16"] {
        let path = dir.path().join(format!("t{t}.csv"));
        let o = twostage(&[
            "simulate", "--scenario", "config2", "--seed", "5", "--reps", "60", "--threads", t, "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        outputs.push(fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_from_environment() {
    let run = |env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_twostage"));
        c.args(["simulate", "--scenario", "config1", "--reps", "5", "--m", "20"]);
        match env {
            Some(v) => c.env("TWOSTAGE_SEED", v),
            None => c.env_remove("TWOSTAGE_SEED"),
        };
        c.output().unwrap()
    };
    let a = run(Some("42"));
    assert!(stdout(&a).contains("# seed=42\n"));
    assert!(a.stderr.is_empty());
    let b = run(None);
    assert_eq!(code(&b), 0);
    let err = String::from_utf8(b.stderr.clone()).unwrap();
    let drawn = err.trim().strip_prefix("seed: ").expect("seed breadcrumb");
    assert!(stdout(&b).contains(&format!("# seed={drawn}\n")));
    assert_eq!(code(&run(Some("not-a-number"))), 2);
}

#[test]
fn zero_reps_is_a_config_error() {
    let o = twostage(&["simulate", "--scenario", "config2", "--seed", "1", "--reps", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_scenario_and_method_are_config_errors() {
    assert_eq!(code(&twostage(&["simulate", "--scenario", "config9", "--seed", "1"])), 2);
    assert_eq!(code(&twostage(&["simulate", "--scenario", "config1", "--methods", "foo:1", "--seed", "1"])), 2);
}

#[test]
fn simulation_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for fmt in ["csv", "json"] {
        let path = dir.path().join(format!("r.{fmt}"));
        let o = twostage(&[
            "simulate", "--scenario", "config3", "--seed", "3", "--reps", "25", "--format", fmt, "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        let text = fs::read_to_string(&path).unwrap();
        let r = if fmt == "csv" { read_simulation_csv(&text) } else { read_simulation_json(&text) }.unwrap();
        assert_eq!(r.methods.len(), 7);
        assert_eq!(r.metadata.seed, 3);
        assert!(r.metadata.renormalized);
        let again = if fmt == "csv" {
            twostage_cli::report::simulation_csv(&r)
        } else {
            twostage_cli::report::simulation_json(&r)
        };
        assert_eq!(again, text);
    }
    let csv = read_simulation_csv(&fs::read_to_string(dir.path().join("r.csv")).unwrap()).unwrap();
    let json = read_simulation_json(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(csv.metadata, json.metadata);
    for (a, b) in csv.methods.iter().zip(&json.methods) {
        assert_eq!(a.method, b.method);
        for (x, y) in [
            (a.empirical_fwer, b.empirical_fwer),
            (a.fwer_se, b.fwer_se),
            (a.power, b.power),
            (a.power_se, b.power_se),
            (a.mean_f, b.mean_f),
        ] {
            assert!(same_bits(x, y));
        }
    }
}

#[test]
fn global_null_power_is_nan_and_survives_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("null.toml");
    fs::write(
        &cfg,
        r#"
seed = 9
[simulate]
methods = ["none", "product:2:0.9"]
[simulate.scenario]
name = "null00"
m = 20
reps = 10
rows = [{ gamma = 0, beta = 0, proportion = 1, truth = "null00" }]
"#,
    )
    .unwrap();
    let o = twostage(&["simulate", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_simulation_json(&stdout(&o)).unwrap();
    assert_eq!(r.metadata.seed, 9);
    assert!(r.methods.iter().all(|m| m.power.is_nan()));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[simulate]\nscenarios = 1\n").unwrap();
    let o = twostage(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("scenarios") && err.contains("line"), "{err}");
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&twostage(&["simulate", "--config", missing.to_str().unwrap()])), 3);
}

#[test]
fn unwritable_output_exits_3() {
    let o = twostage(&[
        "simulate", "--scenario", "config1", "--seed", "1", "--reps", "2", "--m", "10", "--out",
        "/nonexistent-dir/x/report.csv",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn simulate_svg_is_emitted() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("fig.svg");
    let o = twostage(&[
        "simulate", "--scenario", "config1", "--seed", "1", "--reps", "10", "--svg", svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("product:1.2:0.8"));
}

#[test]
fn mse_ratio_preset_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("ratio.svg");
    let o = twostage(&[
        "mse-ratio", "--preset", "fig5a-2", "--n-grid", "100,10000", "--reps", "2000", "--seed", "4", "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_mse_ratio_csv(&stdout(&o)).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.metadata.preset.as_deref(), Some("fig5a-2"));
    assert_eq!((r.metadata.c, r.metadata.delta), (4.0, 0.7));
    assert_eq!(twostage_cli::report::mse_ratio_csv(&r), stdout(&o));
    assert!(fs::read_to_string(svg).unwrap().contains("<polyline"));

    let j = twostage(&["mse-ratio", "--preset", "fig5a-2", "--n-grid", "100,10000", "--reps", "2000", "--seed", "4", "--format", "json"]);
    let rj = read_mse_ratio_json(&stdout(&j)).unwrap();
    for (a, b) in r.rows.iter().zip(&rj.rows) {
        assert!(same_bits(a.ratio, b.ratio) && same_bits(a.mc_se, b.mc_se) && same_bits(a.k_at_n, b.k_at_n));
    }
}

#[test]
fn mse_ratio_inline_sequence() {
    let o = twostage(&[
        "mse-ratio", "--gamma", "n^-1", "--beta", "n^-1", "--c", "2.5", "--delta", "1.5", "--n-grid", "10000",
        "--reps", "1000", "--seed", "2", "--threads", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_mse_ratio_csv(&stdout(&o)).unwrap();
    assert!((r.rows[0].ratio - 1.0).abs() < 0.1);
}

#[test]
fn mse_ratio_empty_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(&cfg, "[mse_ratio]\npreset = \"fig5c\"\nn_grid = []\n").unwrap();
    assert_eq!(code(&twostage(&["mse-ratio", "--config", cfg.to_str().unwrap(), "--seed", "1"])), 2);
    assert_eq!(code(&twostage(&["mse-ratio", "--preset", "fig5c", "--n-grid", "", "--seed", "1"])), 2);
    assert_eq!(code(&twostage(&["mse-ratio", "--preset", "nope", "--seed", "1"])), 2);
}

#[test]
fn classify_examples() {
    let o = twostage(&["classify", "--gamma", "n^-0.6", "--beta", "n^-0.6", "--delta", "0.8", "--c", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1);
    let v = json(&o);
    assert_eq!(v["L_region"], "One");
    assert_eq!(v["K"], 0.0);
    assert_eq!(v["efficiency_class"], "MuchMore");
    assert!(v.get("A_diagnostics").is_some());

    let v = json(&twostage(&["classify", "--gamma", "0.5", "--beta", "2", "--delta", "0.8"]));
    assert_eq!(v["L_region"], "Zero");
    assert_eq!(v["K"], "inf");
    assert_eq!(v["efficiency_class"], "Equivalent");
}

#[test]
fn classify_inconsistent_cell_exits_4() {
    let o = twostage(&["classify", "--delta", "1.2", "--a-limit", "0", "--k-limit", "0"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("inconsistent"));
    assert_eq!(code(&twostage(&["classify", "--delta", "0.8"])), 2);
    assert_eq!(code(&twostage(&["classify", "--gamma", "n^", "--beta", "1", "--delta", "0.8"])), 2);
}

fn write_data(path: &Path, n: usize, noisy: bool) {
    use twostage::dist::RandomStream;
    let mut s = RandomStream::new(99, 0);
    let mut text = String::from("x1,a,m,y\n");
    for _ in 0..n {
        let x = s.standard_normal();
        let a = s.standard_normal();
        let e1 = s.standard_normal();
        let e2 = if noisy { s.standard_normal() } else { 0.0 };
        let m = 0.2 + 0.3 * x + 0.8 * a + e1;
        let y = -0.1 + 0.5 * x + 0.4 * a + 0.5 * m + e2;
        text.push_str(&format!("{x},{a},{m},{y}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn fit_strong_mediation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_data(&path, 10_000, true);
    let o = twostage(&["fit", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert!((v["gamma_hat"].as_f64().unwrap() - 0.8).abs() < 0.05);
    assert!((v["beta_hat"].as_f64().unwrap() - 0.5).abs() < 0.05);
    assert!(v["sobel_z"].as_f64().unwrap().abs() > 10.0);
    assert!(v["joint_pvalue"].as_f64().unwrap() < 1e-10);
}

#[test]
fn fit_noiseless_outcome_reports_exact_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_data(&path, 200, false);
    let o = twostage(&["fit", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert!((v["beta_hat"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert!(v["se_beta"].as_f64().unwrap() < 1e-10);
}

#[test]
fn fit_missing_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "a,y\n1,2\n3,4\n").unwrap();
    let o = twostage(&["fit", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`m`") || String::from_utf8_lossy(&o.stderr).contains(": m"));
    assert_eq!(code(&twostage(&["fit", dir.path().join("none.csv").to_str().unwrap()])), 3);
}

#[test]
fn fit_collinear_design_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut text = String::from("x1,a,m,y\n");
    for i in 0..20 {
        let a = (i % 3) as f64;
        text.push_str(&format!("{},{a},{},{}\n", 2.0 * a, i as f64 * 0.37 % 1.0, i as f64));
    }
    fs::write(&path, text).unwrap();
    assert_eq!(code(&twostage(&["fit", path.to_str().unwrap()])), 5);
}

#[test]
fn fwer_bound_no_filter() {
    let o = twostage(&["fwer-bound", "--scenario", "config1", "--rule", "none", "--reps", "100", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["p0"], 1.0);
    assert_eq!(v["rule"], "none");
    assert_eq!(v["adjustment"], "bonferroni");
    let bound = v["bound"].as_f64().unwrap();
    assert!(bound <= 0.05 + v["bound_se"].as_f64().unwrap() + 1e-3, "{bound}");
}

#[test]
fn fwer_bound_without_rejections_is_zero() {
    let o = twostage(&[
        "fwer-bound", "--scenario", "config1", "--rule", "product:1000:0.1", "--reps", "20", "--seed", "3",
        "--p0-reps", "1000",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["max_conditional_reject"], 0.0);
    assert_eq!(v["bound"], 0.0);
}

#[test]
fn fwer_bound_is_consistent_with_simulation() {
    let o = twostage(&["fwer-bound", "--scenario", "config2", "--rule", "product:2:0.9", "--reps", "300", "--seed", "8"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let f = |k: &str| v[k].as_f64().unwrap();
    assert!(f("empirical_fwer") <= f("bound") + 3.0 * (f("fwer_se").powi(2) + f("bound_se").powi(2)).sqrt());
    assert!(f("p0") > 0.0 && f("p0") < 1.0);
}

#[test]
fn shipped_configs_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (cmd, file) in [("simulate", "custom_mixture.toml"), ("mse-ratio", "mse_ratio.toml"), ("fwer-bound", "fwer_bound.toml")] {
        let path = root.join(file);
        let o = twostage(&[cmd, "--config", path.to_str().unwrap(), "--reps", "100"]);
        assert_eq!(code(&o), 0, "{file}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stdout.is_empty());
    }
}
