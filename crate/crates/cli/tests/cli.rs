//! End-to-end tests of the `cnmot` binary: exit codes, file outputs,
//! determinism, and config-file/flag precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cnmot")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("cnmot-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_json(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn transform_measure_example() {
    let dir = workdir("transform");
    let mu = dir.join("mu.json");
    write_json(&mu, r#"{"atoms":[1.0,3.0],"weights":[0.5,0.5]}"#);
    let out = run(&[
        "transform",
        "--measure",
        mu.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(dir.join("measure_transformed.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let atoms: Vec<f64> = v["atoms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let weights: Vec<f64> = v["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    // transform of 1/2 d1 + 1/2 d3 is 3/4 d(1/3) + 1/4 d1
    assert!((atoms[0] - 1.0 / 3.0).abs() < 1e-12 && (atoms[1] - 1.0).abs() < 1e-12);
    assert!((weights[0] - 0.75).abs() < 1e-12 && (weights[1] - 0.25).abs() < 1e-12);
}

#[test]
fn transform_involution_is_byte_identical() {
    let dir = workdir("involution");
    let mu = dir.join("mu.json");
    write_json(&mu, r#"{"atoms":[0.5,1.0,2.5],"weights":[0.25,0.5,0.25]}"#);
    let out1 = run(&[
        "transform",
        "--measure",
        mu.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out1), 0);
    let once = dir.join("measure_transformed.json");
    let dir2 = dir.join("again");
    std::fs::create_dir_all(&dir2).unwrap();
    let out2 = run(&[
        "transform",
        "--measure",
        once.to_str().unwrap(),
        "--out-dir",
        dir2.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out2), 0);
    let original = std::fs::read_to_string(&mu).unwrap();
    let twice = std::fs::read_to_string(dir2.join("measure_transformed.json")).unwrap();
    let a: serde_json::Value = serde_json::from_str(&original).unwrap();
    let b: serde_json::Value = serde_json::from_str(&twice).unwrap();
    assert_eq!(a, b);
}

#[test]
fn transform_rejects_non_positive_support_with_exit_3() {
    let dir = workdir("nonpositive");
    let mu = dir.join("mu.json");
    write_json(&mu, r#"{"atoms":[-1.0,3.0],"weights":[0.5,0.5]}"#);
    let out = run(&[
        "transform",
        "--measure",
        mu.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3, "{out:?}");
}

#[test]
fn transform_rejects_garbage_with_exit_2() {
    let dir = workdir("garbage");
    let mu = dir.join("mu.json");
    write_json(&mu, "not json");
    let out = run(&[
        "transform",
        "--measure",
        mu.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2, "{out:?}");
}

#[test]
fn bass_dirac_source_and_degenerate_pair() {
    let dir = workdir("bass");
    let mu = dir.join("mu.json");
    let nu = dir.join("nu.json");
    write_json(&mu, r#"{"atoms":[1.0],"weights":[1.0]}"#);
    write_json(&nu, r#"{"atoms":[0.5,1.5],"weights":[0.5,0.5]}"#);
    let out = run(&[
        "bass",
        "--mu",
        mu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
        "--n-grid",
        "256",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    assert!(dir.join("bass_solution.json").exists());
    assert!(dir.join("bass_residuals.csv").exists());

    // equal marginals: no transport component, flagged degenerate
    let out = run(&[
        "bass",
        "--mu",
        nu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 4, "{out:?}");
}

#[test]
fn simulate_is_deterministic_and_checks_pass() {
    let dir = workdir("simulate");
    let mu = dir.join("mu.json");
    let nu = dir.join("nu.json");
    write_json(&mu, r#"{"atoms":[0.8,1.2],"weights":[0.5,0.5]}"#);
    write_json(
        &nu,
        r#"{"atoms":[0.6,0.9,1.0,1.5],"weights":[0.25,0.25,0.25,0.25]}"#,
    );
    let args_for = |out_dir: &Path| {
        vec![
            "simulate".to_string(),
            "--mu".into(),
            mu.to_str().unwrap().into(),
            "--nu".into(),
            nu.to_str().unwrap().into(),
            "--n-paths".into(),
            "4000".into(),
            "--n-steps".into(),
            "64".into(),
            "--seed".into(),
            "42".into(),
            "--check".into(),
            "distance-expansion".into(),
            "--check".into(),
            "ct-identity".into(),
            "--h".into(),
            "t1:1".into(),
            "--out-dir".into(),
            out_dir.to_str().unwrap().into(),
        ]
    };
    let d1 = dir.join("run1");
    let d2 = dir.join("run2");
    for d in [&d1, &d2] {
        let out = Command::new(bin()).args(args_for(d)).output().unwrap();
        assert_eq!(exit_code(&out), 0, "{out:?}");
    }
    for name in ["gsbm.csv", "bm.csv", "sbm.csv", "simulate_report.json"] {
        let a = std::fs::read(d1.join(name)).unwrap();
        let b = std::fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    assert!(d1.join("plot_fan.py").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.join("simulate_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert!(report["checks"]["distance-expansion"]["pass"].as_bool().unwrap());
    assert!(report["checks"]["ct_identity_one"]["pass"].as_bool().unwrap());
}

#[test]
fn simulate_rejection_bound_violation_fails() {
    let dir = workdir("rejection");
    let mu = dir.join("mu.json");
    let nu = dir.join("nu.json");
    write_json(&mu, r#"{"atoms":[0.8,1.2],"weights":[0.5,0.5]}"#);
    write_json(&nu, r#"{"atoms":[0.6,0.9,1.0,1.5],"weights":[0.25,0.25,0.25,0.25]}"#);
    let out = run(&[
        "simulate",
        "--mu",
        mu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
        "--n-paths",
        "500",
        "--n-steps",
        "32",
        "--resample",
        "rejection",
        "--bound",
        "0.01",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_ne!(exit_code(&out), 0, "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bound"), "stderr: {err}");
}

#[test]
fn shadow_presets_verify_and_dirac_gives_product() {
    let dir = workdir("shadow");
    let mu = dir.join("mu.json");
    let nu = dir.join("nu.json");
    write_json(&mu, r#"{"atoms":[1.0,2.0],"weights":[0.5,0.5]}"#);
    write_json(&nu, r#"{"atoms":[0.7,1.3,1.5,2.5],"weights":[0.25,0.25,0.25,0.25]}"#);
    for preset in ["monotone", "product"] {
        let out = run(&[
            "shadow",
            "--mu",
            mu.to_str().unwrap(),
            "--nu",
            nu.to_str().unwrap(),
            "--preset",
            preset,
            "--k",
            "16",
            "--verify",
            "cn",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{preset}: {out:?}");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("shadow_report.json")).unwrap())
                .unwrap();
        assert_eq!(report["pass"], serde_json::Value::Bool(true));
        assert!(report["max_diff"].as_f64().unwrap() < 1e-6);
    }
    let lifted = std::fs::read_to_string(dir.join("lifted.csv")).unwrap();
    assert!(lifted.starts_with("x0,u,x1,w\n"));

    // Dirac source: projection is the product coupling
    let dmu = dir.join("dirac.json");
    write_json(&dmu, r#"{"atoms":[1.3],"weights":[1.0]}"#);
    let dnu = dir.join("dnu.json");
    write_json(&dnu, r#"{"atoms":[1.0,2.0],"weights":[0.7,0.3]}"#);
    let out = run(&[
        "shadow",
        "--mu",
        dmu.to_str().unwrap(),
        "--nu",
        dnu.to_str().unwrap(),
        "--preset",
        "monotone",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let coupling: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("coupling.json")).unwrap())
            .unwrap();
    let w = coupling["weights"].as_array().unwrap();
    assert_eq!(w.len(), 1);
    assert!((w[0][0].as_f64().unwrap() - 0.7).abs() < 1e-9);
    assert!((w[0][1].as_f64().unwrap() - 0.3).abs() < 1e-9);
}

#[test]
fn mcov_two_point_value() {
    let dir = workdir("mcov");
    let m = dir.join("m.json");
    write_json(&m, r#"{"atoms":[1.0,3.0],"weights":[0.5,0.5]}"#);
    let out = run(&[
        "mcov",
        "--measure",
        m.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mcov.json")).unwrap()).unwrap();
    // two-point symmetric spread of half-width 1: sqrt(2/pi)
    let expect = (2.0 / std::f64::consts::PI).sqrt();
    assert!((report["mcov"].as_f64().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn value_subcommand_both_kinds() {
    let dir = workdir("value");
    let mu = dir.join("mu.json");
    let nu = dir.join("nu.json");
    write_json(&mu, r#"{"atoms":[0.9,1.1],"weights":[0.5,0.5]}"#);
    write_json(&nu, r#"{"atoms":[0.7,0.9,1.1,1.3],"weights":[0.25,0.25,0.25,0.25]}"#);
    for kind in ["sbm", "gsbm"] {
        let out = run(&[
            "value",
            "--mu",
            mu.to_str().unwrap(),
            "--nu",
            nu.to_str().unwrap(),
            "--kind",
            kind,
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{kind}: {out:?}");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("value.json")).unwrap())
                .unwrap();
        assert!(report["value"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = workdir("config");
    let m = dir.join("m.json");
    let other = dir.join("other.json");
    write_json(&m, r#"{"atoms":[1.0,3.0],"weights":[0.5,0.5]}"#);
    write_json(&other, r#"{"atoms":[2.0],"weights":[1.0]}"#);
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# run configuration\nmeasure = {}\nout_dir = {}\n",
            m.display(),
            dir.display()
        ),
    )
    .unwrap();
    // config alone supplies the input
    let out = run(&["mcov", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mcov.json")).unwrap()).unwrap();
    let expect = (2.0 / std::f64::consts::PI).sqrt();
    assert!((report["mcov"].as_f64().unwrap() - expect).abs() < 1e-12);
    // the report embeds the resolved config
    assert!(report["config"]["measure"].is_string());

    // an explicit flag overrides the config entry: delta has mcov 0
    let out = run(&[
        "mcov",
        "--config",
        cfg.to_str().unwrap(),
        "--measure",
        other.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mcov.json")).unwrap()).unwrap();
    assert_eq!(report["mcov"].as_f64().unwrap(), 0.0);
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = workdir("envvar");
    let m = dir.join("m.json");
    write_json(&m, r#"{"atoms":[2.0],"weights":[1.0]}"#);
    let out = Command::new(bin())
        .args(["mcov", "--measure", m.to_str().unwrap()])
        .env("CNMOT_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{out:?}");
    assert!(dir.join("mcov.json").exists());
}
