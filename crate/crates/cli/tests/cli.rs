//! End-to-end checks of the `qosc` binary: artifact layout, the manifest
//! round-trip guarantee, and exit-code conventions.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qosc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qosc"))
}

fn write_reference_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("reference.ini");
    fs::write(
        &path,
        "[system]\n\
         m = 2\n\
         theta = pi/3\n\
         \n\
         [network]\n\
         graph = random\n\
         agents = 5\n\
         edge_prob = 0.5\n\
         directed = false\n\
         \n\
         [gains]\n\
         epsilon = 0.01\n\
         c_star = 1.0\n\
         c_delta_star = 1.0\n\
         \n\
         [schedule]\n\
         levels = 4\n\
         \n\
         [run]\n\
         gamma = 0.9975\n\
         p0 = 10\n\
         horizon = 1200\n\
         seed = 1\n",
    )
    .unwrap();
    path
}

fn summary_field(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim().to_string())
        })
        .unwrap_or_else(|| panic!("summary missing key `{key}`:\n{summary}"))
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn reference_run_summary_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_reference_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let out = qosc()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert_eq!(summary_field(&summary, "bits"), "3");
    assert_eq!(summary_field(&summary, "saturation_count"), "0");
    let rate: f64 = summary_field(&summary, "fitted_rate").parse().unwrap();
    assert!(rate <= 0.9975, "fitted rate {rate}");

    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("t,x_1_1,x_1_2,x_1_3,x_1_4,x_2_1"));
    assert!(header.contains("delta_inf_1"));
    assert!(header.contains("max_quant_err,saturations"));
    assert!(header.ends_with("u_5"));
    assert_eq!(trace.lines().count(), 1201);

    let symbols = fs::read_to_string(out_dir.join("symbols.csv")).unwrap();
    assert_eq!(symbols.lines().next().unwrap(), "t,agent,symbol,d_value,saturated");
    assert_eq!(symbols.lines().count(), 1 + 1200 * 5);
}

#[test]
fn manifest_round_trip_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_reference_config(tmp.path());
    let (dir_a, dir_b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = qosc()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir_a)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let out = qosc()
        .args(["simulate", "--config"])
        .arg(dir_a.join("manifest.txt"))
        .arg("--out")
        .arg(&dir_b)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    for name in ["manifest.txt", "trace.csv", "symbols.csv", "summary.txt"] {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs after manifest re-run");
    }
}

/// Starving the reference scenario down to a single quantizer level logs
/// saturations but still completes with exit 0 — insufficient rate is an
/// experiment, not an error.
#[test]
fn sub_threshold_alphabet_logs_saturations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_reference_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let out = qosc()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--set", "schedule.levels=1", "--set", "run.horizon=400"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    let sats: usize = summary_field(&summary, "saturation_count").parse().unwrap();
    assert!(sats > 0, "expected saturations with a starved alphabet");
}

#[test]
fn missing_graph_file_is_diagnosed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.ini");
    fs::write(
        &cfg,
        "[system]\nm = 1\ntheta = pi/2\n\n[network]\ngraph = file:/nonexistent/g.txt\n\n\
         [gains]\nc_star = 1\nc_delta_star = 1\n\n[run]\nhorizon = 10\n",
    )
    .unwrap();
    let out = qosc()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("/nonexistent/g.txt"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_config_key_reports_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.ini");
    fs::write(&cfg, "[system]\nm = 1\nmystery = 3\n").unwrap();
    let out = qosc()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains(":3") && err.contains("mystery"), "stderr: {err}");
}

#[test]
fn verify_lemma3_smoke() {
    let out = qosc()
        .args(["verify-lemma3", "--m-max", "3", "--theta-steps", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verify-lemma3: ok"), "{stdout}");
}

#[test]
fn rate_table_has_reference_row() {
    let out = qosc().args(["rate-table", "--m-max", "2"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().next().unwrap(), "m,theta,m_steady,bits");
    // The m = 2, θ = π/3 grid row needs 4 levels / 3 bits.
    let row = stdout
        .lines()
        .find(|l| l.starts_with("2,1.0471975511965976,"))
        .expect("π/3 row present");
    assert_eq!(row, "2,1.0471975511965976,4,3");
}

#[test]
fn sweep_merges_runs_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_reference_config(tmp.path());
    let grid = tmp.path().join("grid.txt");
    fs::write(
        &grid,
        "# two seeds and one deliberately broken override\n\
         run.seed=1 run.horizon=200\n\
         run.seed=2 run.horizon=200\n\
         network.graph=file:/nonexistent/g.txt run.horizon=200\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("sweep");
    let out = qosc()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--grid")
        .arg(&grid)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    // One failed run → nonzero exit, but the healthy runs still landed.
    assert!(!out.status.success());
    let merged = fs::read_to_string(out_dir.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = merged.lines().collect();
    assert_eq!(lines[0], "run,overrides,status,saturation_count,ratio,fitted_rate");
    assert!(lines[1].starts_with("run_000,run.seed=1"));
    assert!(lines[2].starts_with("run_001,run.seed=2"));
    assert!(lines[3].starts_with("run_002,") && lines[3].contains("error"));
    assert!(out_dir.join("run_000/trace.csv").exists());
    assert!(out_dir.join("run_001/summary.txt").exists());
    assert!(out_dir.join("run_002/error.txt").exists());
}

#[test]
fn spectral_check_reports_and_gates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("spectral.ini");
    fs::write(
        &cfg,
        "[system]\nm = 2\ntheta = pi/3\n\n[spectral]\nlambdas = 0.5 1 2\n",
    )
    .unwrap();
    let out = qosc()
        .args(["spectral-check", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().next().unwrap(),
        "m,theta,lambda,epsilon,rho,predicted_rho,slope_fit,predicted_slope"
    );
    // 3 λ × 4 default probes.
    assert_eq!(stdout.lines().count(), 13);
}

#[test]
fn power_bounds_reports_pair_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("power.ini");
    fs::write(
        &cfg,
        "[system]\nm = 2\ntheta = pi/3\n\n[power]\nlambda = 0.8299\nepsilon = 1e-4\n\
         s_max = 500\ntrials = 20\nseed = 8\n",
    )
    .unwrap();
    let out = qosc()
        .args(["power-bounds", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pair_1 = "), "{stdout}");
    assert!(stdout.contains("pair_2 = "), "{stdout}");
    assert!(stdout.contains("power-bounds: ok"), "{stdout}");
}
