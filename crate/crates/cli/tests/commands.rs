use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn subnyq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subnyq"))
        .args(args)
        .env("SUBNYQ_THREADS", "2")
        .output()
        .expect("spawn subnyq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_sweep(dir: &Path) -> PathBuf {
    let cfg = dir.join("small.json");
    fs::write(
        &cfg,
        r#"{"tone_frequencies":[1e8],"sample_rate_grid":[133e6],"snr_db_grid":[20,30,40],
            "trials_per_point":4,"n_samples":256,"master_seed":2}"#,
    )
    .unwrap();
    let out = dir.join("sweep");
    let o = subnyq(&["sweep", "--config", p(&cfg), "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn crb_single_row() {
    let o = subnyq(&["crb", "--n", "1000", "--snr-db", "10", "--freq", "1e8", "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "freq_relvar_bound").unwrap();
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let v: f64 = rows[0][col].parse().unwrap();
    assert!((v - 2e-4).abs() < 1e-18);
    assert!(headers.iter().any(|h| h == "constants_note"));
}

#[test]
fn crb_sweep_rows() {
    let o = subnyq(&["crb", "--n", "1000", "--snr-db", "0:10:50", "--freq", "1e8", "--json"]);
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5]["snr_db"], 50.0);
}

#[test]
fn crb_table_prints_note() {
    let o = subnyq(&["crb", "--n", "64", "--snr-db", "20", "--freq", "1e8", "--sample-rate", "133e6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("note:")));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn crb_flag_errors_exit_2() {
    let o = subnyq(&["crb", "--snr-db", "10", "--freq", "1e8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--n"));
    let o = subnyq(&["crb", "--n", "1000", "--snr-db", "0:-1:5", "--freq", "1e8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_exact_when_noiseless() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("noiseless.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = subnyq(&["simulate", "--config", p(&cfg), "--seed", "9", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["observation.csv", "truth.csv", "estimates.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let truth: Vec<f64> = csv::Reader::from_path(a.join("truth.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    let est: Vec<f64> = csv::Reader::from_path(a.join("estimates.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[0] == "sngem")
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(truth.len(), est.len());
    for f in &truth {
        let best = est.iter().map(|e| (e - f).abs() / f).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-10, "{f}: {best}");
    }
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"trials_per_point\": 3,\n  \"snr_db_grid\": [10,\n").unwrap();
    let o = subnyq(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.json:4:"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"trials": 3}"#).unwrap();
    let o = subnyq(&["sweep", "--config", p(&cfg), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_empty_snr_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"snr_db_grid": []}"#).unwrap();
    let o = subnyq(&["sweep", "--config", p(&cfg), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("snr_db_grid"));
}

#[test]
fn sweep_writes_outputs_and_compare_flags_floor() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_sweep(dir.path());
    assert!(out.join("config_echo.json").exists());
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert!(trials.starts_with(
        "snr_db,compression,method,trial,tone_idx,f_true_hz,f_hat_hz,a_true,a_hat,phi_true_rad,phi_hat_rad,matched\n"
    ));
    assert_eq!(trials.lines().count(), 1 + 3 * 2 * 4);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2);

    let o = subnyq(&["compare", "--in", p(&out.join("summary.csv")), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let floors = report["floors"].as_array().unwrap();
    let flag = |m: &str| floors.iter().find(|f| f["method"] == m).unwrap()["floored"].as_bool();
    assert_eq!(flag("omp"), Some(true));
    assert_eq!(flag("sngem"), Some(false));
}

#[test]
fn plot_emits_three_curves_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_sweep(dir.path());
    let summary = out.join("summary.csv");
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    for svg in [&a, &b] {
        let o = subnyq(&["plot", "--in", p(&summary), "--out", p(svg)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("<svg"));
    assert_eq!(text.matches("class=\"curve\"").count(), 3);
    assert!(text.contains("stroke-dasharray"));
}

#[test]
fn plot_single_row_draws_markers() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("one.csv");
    fs::write(
        &csv_path,
        "snr_db,compression,method,rmse_f_rel,rmse_a_rel,rmse_phi_rad,miss_rate,crb_rel,rmse_over_crb\n\
         30,15,sngem,0.001,0.001,0.001,0,0.0009,1.1\n",
    )
    .unwrap();
    let svg = dir.path().join("one.svg");
    let o = subnyq(&["plot", "--in", p(&csv_path), "--out", p(&svg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&svg).unwrap().contains("<circle"));
}

#[test]
fn plot_rejects_nonpositive_y_and_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("z.csv");
    fs::write(
        &csv_path,
        "snr_db,compression,method,rmse_f_rel,rmse_a_rel,rmse_phi_rad,miss_rate,crb_rel,rmse_over_crb\n\
         10,15,sngem,0.01,0.01,0.01,0,0.009,1.1\n\
         20,15,sngem,0,0.01,0.01,0,0.003,0\n",
    )
    .unwrap();
    let svg = dir.path().join("z.svg");
    let o = subnyq(&["plot", "--in", p(&csv_path), "--out", p(&svg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("log"), "{}", stderr(&o));
    assert!(!svg.exists());

    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"y": ["rmse_missing"]}"#).unwrap();
    let o = subnyq(&["plot", "--in", p(&csv_path), "--spec", p(&spec), "--out", p(&svg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rmse_missing"));
}
