use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tdswanson::static_metric::forbidden_band;

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

fn tdswanson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdswanson")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn constant_scenario(omega: f64, alpha: f64, beta: f64) -> String {
    format!(
        r#"{{"omega": {{"kind": "constant", "value": {omega}}},
            "alpha": {{"kind": "constant", "value": {alpha}}},
            "beta": {{"kind": "constant", "value": {beta}}}, "t0": 0.0, "t1": 2.0}}"#
    )
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn hermitian_identity_run_keeps_w_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"scenario": {}, "mode": "identity", "initial": {{"r": 0.3, "phi_s": 0.1}},
            "grid": {{"t0": 0.0, "t1": 1.0, "points": 11}}, "dim": 40}}"#,
        constant_scenario(1.0, 0.2, 0.2)
    );
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = tdswanson(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--verify", "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 11);
    let w = column(&header, "W");
    for row in &rows {
        let v: f64 = row[w].parse().unwrap();
        assert!((v - 1.0).abs() < 1e-14, "W = {v}");
    }
    for f in ["lr.csv", "observables.json", "verification.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn real_non_hermitian_run_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"scenario": {}, "mode": "real", "z_abs": 0.5, "initial": {{"phi": 0.2}},
            "grid": {{"t0": 0.0, "t1": 1.0, "points": 11}}, "levels": [0, 1]}}"#,
        constant_scenario(1.0, 0.2, 0.05)
    );
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = tdswanson(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--verify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("verification.json")).unwrap()).unwrap();
    assert_eq!(v["all_pass"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 8);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("trajectory.csv"), "{stdout}");
}

#[test]
fn static_real_inside_band_exits_one_and_cites_edges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"scenario": {}, "mode": "static-real", "z_abs": 0.3}}"#, constant_scenario(2.0, 0.6, 0.2));
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = tdswanson(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let band = forbidden_band(2.0, 0.6, 0.2).unwrap().expect("band");
    assert!(band.contains(0.3));
    let msg = stderr(&o);
    assert!(msg.contains("forbidden band"), "{msg}");
    assert!(msg.contains(&band.z_minus.to_string()) && msg.contains(&band.z_plus.to_string()), "{msg}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("static_real.json")).unwrap()).unwrap();
    assert_eq!(report["in_forbidden_band"], true);
}

#[test]
fn static_real_equal_alpha_beta_gives_zero_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"scenario": {}, "mode": "static-real", "z_abs": 0.4}}"#, constant_scenario(1.0, 0.3, 0.3));
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = tdswanson(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("static_real.json")).unwrap()).unwrap();
    assert_eq!(report["epsilon"]["arctanh"].as_f64(), Some(0.0));
    assert_eq!(report["epsilon"]["log"].as_f64(), Some(0.0));
}

#[test]
fn band_sweep_matches_forbidden_band() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"scenario": {}, "mode": "static-real", "z_abs": 0.3}}"#, constant_scenario(2.0, 0.6, 0.2));
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = tdswanson(&[
        "sweep",
        path.to_str().unwrap(),
        "--param",
        "z_abs",
        "--range",
        "0:1:101",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let band = forbidden_band(2.0, 0.6, 0.2).unwrap().expect("band");
    let (header, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 101);
    let (value, in_band, eps, status) =
        (column(&header, "value"), column(&header, "in_forbidden_band"), column(&header, "epsilon"), column(&header, "status"));
    let mut inside = 0;
    for row in &rows {
        let z: f64 = row[value].parse().unwrap();
        if z <= 0.0 || z >= 1.0 {
            assert_eq!(row[status], "invalid", "z = {z}");
            continue;
        }
        let expect = band.contains(z);
        assert_eq!(row[in_band] == "true", expect, "z = {z}");
        assert_eq!(row[eps].is_empty(), expect, "z = {z}");
        inside += expect as usize;
    }
    assert!(inside > 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 101);
    for p in points.iter().filter(|p| p["status"] != "invalid") {
        assert!(p["cubic_roots"].is_array() && p["angles"].is_array() && p["in_forbidden_band"].is_boolean());
        for r in p["residuals"].as_array().unwrap() {
            assert!(r.as_f64().unwrap() <= 1e-8, "{p}");
        }
    }
    assert!(out.join("sweep_summary.json").exists());
}

#[test]
fn runs_and_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"scenario": {}, "mode": "real", "z_abs": 0.5, "initial": {{"phi": 0.2}},
            "grid": {{"t0": 0.0, "t1": 1.0, "points": 6}},
            "sweep": {{"param": "phi", "range": "0.0:0.3:7"}}}}"#,
        constant_scenario(1.0, 0.2, 0.05)
    );
    let path = write_config(dir.path(), &cfg);
    let p = path.to_str().unwrap();
    let outs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("out{i}"))).collect();
    for o in &outs {
        let r = tdswanson(&["run", p, "--out", o.to_str().unwrap(), "--quiet"]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let s = tdswanson(&["sweep", p, "--out", o.join("sweep").to_str().unwrap(), "--quiet"]);
        assert_eq!(code(&s), 0, "{}", stderr(&s));
    }
    for f in ["trajectory.csv", "lr.csv", "observables.json", "sweep/sweep.csv", "sweep/sweep.json", "sweep/sweep_summary.json"] {
        let a = std::fs::read(outs[0].join(f)).unwrap();
        let b = std::fs::read(outs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn config_error_cites_path_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"scenario": {}, "mode": "real", "z_abs": "half"}}"#, constant_scenario(1.0, 0.2, 0.05));
    let path = write_config(dir.path(), &cfg);
    let o = tdswanson(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("z_abs"), "{}", stderr(&o));

    let cfg = format!(r#"{{"scenario": {}, "mode": "real", "z_abs": 0.5}}"#, constant_scenario(1.0, 0.2, 0.05));
    let path = write_config(dir.path(), &cfg);
    let o = tdswanson(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("initial.phi"), "{}", stderr(&o));
}

#[test]
fn bad_range_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"scenario": {}, "mode": "static-real", "z_abs": 0.3}}"#, constant_scenario(2.0, 0.6, 0.2));
    let path = write_config(dir.path(), &cfg);
    for range in ["0:1", "0:1:0", "x:1:3"] {
        let o = tdswanson(&["sweep", path.to_str().unwrap(), "--param", "z_abs", "--range", range]);
        assert_eq!(code(&o), 2, "{range}");
    }
    let o = tdswanson(&["sweep", path.to_str().unwrap(), "--param", "phi", "--range", "0:1:3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verified_static_real_inside_band_still_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"scenario": {}, "mode": "static-real", "z_abs": 0.3}}"#, constant_scenario(2.0, 0.6, 0.2));
    let path = write_config(dir.path(), &cfg);
    let o = tdswanson(&["run", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap(), "--verify"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn fuzz_seeds_parse() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let seeds = |target: &str| {
        let mut v: Vec<(PathBuf, String)> = std::fs::read_dir(corpus.join(target))
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                let s = std::fs::read_to_string(&p).unwrap();
                (p, s)
            })
            .collect();
        v.sort();
        assert!(!v.is_empty(), "{target}");
        v
    };
    for (p, s) in seeds("scenario_json") {
        tdswanson::model::CoefficientScenario::from_json_str(&s).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, s) in seeds("run_config") {
        tdswanson_cli::config::RunConfig::from_json_str(&s).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, s) in seeds("range_spec") {
        let ok = s.parse::<tdswanson_cli::range::RangeSpec>().is_ok() || s.parse::<tdswanson_cli::config::SweepParam>().is_ok();
        assert!(ok, "{}", p.display());
    }
}
