use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sfloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfloc")).args(args).output().expect("binary runs")
}

fn run_ok(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = sfloc(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

#[test]
fn hermitian_spectrum_is_real() {
    let dir = tempfile::tempdir().unwrap();
    run_ok("spectrum", &configs().join("gain_chain.json"), dir.path(), &["--override", "g=0"]);
    let im = csv_column(&dir.path().join("spectrum.csv"), "im_E");
    assert_eq!(im.len(), 100);
    assert!(im.iter().all(|x| x.parse::<f64>().unwrap().abs() < 1e-10));
}

#[test]
fn criterion_reports_the_window() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok("criterion", &configs().join("nnn_chain.json"), dir.path(), &[]);
    assert!(stdout.contains("PT window: (-1.5, -1)"), "{stdout}");
    let report = read_json(&dir.path().join("criterion.json"));
    let window = &report["window"][0];
    assert!((window[0].as_f64().unwrap() + 1.5).abs() < 1e-9);
    assert!((window[1].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn effective_threshold_follows_the_flux() {
    let dir = tempfile::tempdir().unwrap();
    run_ok("effective", &configs().join("flux_ring.json"), dir.path(), &["--override", "phi=1.5707963"]);
    let gc: f64 = csv_column(&dir.path().join("effective_threshold.csv"), "g_c")[0].parse().unwrap();
    assert!((gc - 100.0 * 0.005f64.sin()).abs() < 1e-6, "{gc}");
    let meta = read_json(&dir.path().join("effective.json"));
    assert_eq!(meta["overrides"][0]["key"], "phi");
    assert_eq!(meta["overrides"][0]["value"], "1.5707963");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let gain = configs().join("gain_chain.json");
    let gain = gain.to_str().unwrap();

    assert_eq!(sfloc(&["spectrum"]).status.code(), Some(1));
    assert_eq!(sfloc(&["spectrum", "--config", "/nonexistent.json", "--out", out]).status.code(), Some(1));

    let o = sfloc(&["spectrum", "--config", gain, "--out", out, "--override", "hoppings.0.re=oops"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hoppings[0].re"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"L": 10, "boundary": "sideways", "hoppings": []}"#).unwrap();
    assert_eq!(sfloc(&["spectrum", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(1));

    // a Hermitian chain has no complex states to fit
    let o = sfloc(&["scaling", "--config", gain, "--out", out, "--override", "g=0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = configs().join("nnn_chain.json");
    run_ok("spectrum", &config, a.path(), &[]);
    run_ok("spectrum", &config, b.path(), &[]);
    assert_eq!(
        std::fs::read(a.path().join("spectrum.csv")).unwrap(),
        std::fs::read(b.path().join("spectrum.csv")).unwrap()
    );
}

#[test]
fn scan_grid_is_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    let mut sweep = read_json(&configs().join("phase_obc.json"));
    sweep["base_model"]["L"] = 30.into();
    sweep["base_model"]["perturbations"][1]["i"] = 30.into();
    sweep["base_model"]["perturbations"][1]["j"] = 30.into();
    sweep["axis1"]["steps"] = 5.into();
    sweep["axis2"]["steps"] = 6.into();
    std::fs::write(&config, sweep.to_string()).unwrap();

    let grids: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|threads| {
            let out = dir.path().join(format!("out{threads}"));
            run_ok("scan", &config, &out, &["--threads", threads]);
            let grid = std::fs::read_dir(&out)
                .unwrap()
                .map(|e| e.unwrap().path())
                .find(|p| p.to_string_lossy().ends_with(".grid.csv"))
                .unwrap();
            std::fs::read(grid).unwrap()
        })
        .collect();
    assert_eq!(grids[0], grids[1]);
}
