use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const EXAMPLE: &str = "prep = 1, 0, 1, 1\npost = 1, 0, 1, -1\nnormalize = true\ng = 2\nseed = 42\n";
const OPTIMAL: &str = "prep = 1, 0, 1, 0\npost = 1, 0, 1, 0\nnormalize = true\ng = 2\n";

fn cheshire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cheshire"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .to_string()
}

fn run_with(config: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--config", config.to_str().unwrap()]);
    cheshire(&all)
}

#[test]
fn analytic_reports_extremal_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "opt.cfg", OPTIMAL);
    let text = stdout(&run_with(&cfg, &["analytic"]));
    assert!(value(&text, "c_analytic").starts_with("0.367879"));
    let (c, bound): (f64, f64) = (value(&text, "c_analytic").parse().unwrap(), value(&text, "c_max").parse().unwrap());
    assert!((c - bound).abs() < 1e-15);
    let n: f64 = value(&text, "negativity").parse().unwrap();
    assert!(n > 0.0);
}

#[test]
fn analytic_example_and_zero_coupling() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", EXAMPLE);
    let text = stdout(&run_with(&cfg, &["analytic"]));
    let c: f64 = value(&text, "c_analytic").parse().unwrap();
    assert!((c - 8.0 / 9.0 * (-1f64).exp()).abs() < 1e-15);
    assert_eq!(value(&text, "weak_value_l"), "1+0i");
    assert_eq!(value(&text, "weak_value_sigma"), "2+0i");

    let cfg = write_config(&dir, "zero.cfg", &EXAMPLE.replace("g = 2", "g_a = 0\ng_b = 2"));
    let text = stdout(&run_with(&cfg, &["analytic"]));
    assert_eq!(value(&text, "c_analytic"), "0");
}

#[test]
fn sweep_csv_locates_maximum() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", EXAMPLE);
    let text = stdout(&run_with(&cfg, &["sweep"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("g_a,g_b,c_analytic,c_grid,p_success,negativity"));
    let rows: Vec<Vec<f64>> = lines
        .clone()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 161);
    for r in &rows {
        assert!((r[2] - r[3]).abs() < 1e-8);
    }
    assert_eq!(rows[0][2], 0.0);
    assert!((rows[0][4] - 1.0 / 9.0).abs() < 1e-12);
    let best = rows
        .iter()
        .max_by(|a, b| a[3].abs().partial_cmp(&b[3].abs()).unwrap())
        .unwrap();
    assert!((best[0] - 2.0).abs() <= 0.025);
    let footer = text.lines().last().unwrap();
    assert!(footer.starts_with("# maximum") && footer.contains("g_a=2,"), "{footer}");

    let out = dir.path().join("sweep.csv");
    stdout(&run_with(&cfg, &["sweep", "--steps", "5", "--out", out.to_str().unwrap()]));
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 7);
}

#[test]
fn sweep_beyond_grid_is_numerical_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", EXAMPLE);
    let out = run_with(&cfg, &["sweep", "--g-max", "30"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too small"));
}

#[test]
fn montecarlo_is_deterministic_and_consistent() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", EXAMPLE);
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let a = Command::new(env!("CARGO_BIN_EXE_cheshire"))
        .args(["montecarlo", "--trials", "200000", "--config", cfg.to_str().unwrap(), "--out", csv_a.to_str().unwrap()])
        .env("CHESHIRE_THREADS", "1")
        .output()
        .unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_cheshire"))
        .args(["montecarlo", "--trials", "200000", "--config", cfg.to_str().unwrap(), "--out", csv_b.to_str().unwrap()])
        .env("CHESHIRE_THREADS", "3")
        .output()
        .unwrap();
    let (a, b) = (stdout(&a), stdout(&b));
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());
    let csv = std::fs::read_to_string(&csv_a).unwrap();
    assert!(csv.starts_with("tau,x,y\n"));
    assert_eq!(csv.lines().count(), 200_001);
    let z: f64 = value(&a, "z_score").parse().unwrap();
    assert!(z.abs() < 4.0);
    assert_eq!(value(&a, "reference"), "analytic");

    let other = stdout(&run_with(&cfg, &["montecarlo", "--trials", "1000", "--seed", "7"]));
    assert_ne!(value(&other, "c_hat"), value(&stdout(&run_with(&cfg, &["montecarlo", "--trials", "1000"])), "c_hat"));
}

#[test]
fn noise_widens_error_without_bias() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "noisy.cfg", &format!("{EXAMPLE}noise_a = 5\nnoise_b = 5\n"));
    let clean_cfg = write_config(&dir, "clean.cfg", EXAMPLE);
    let noisy = stdout(&run_with(&cfg, &["montecarlo", "--trials", "400000"]));
    let clean = stdout(&run_with(&clean_cfg, &["montecarlo", "--trials", "400000"]));
    let z: f64 = value(&noisy, "z_score").parse().unwrap();
    assert!(z.abs() < 4.0);
    let se = |t: &str| value(t, "std_error").parse::<f64>().unwrap();
    assert!(se(&noisy) > 5.0 * se(&clean));

    let scan = stdout(&run_with(&clean_cfg, &["montecarlo", "--trials", "20000", "--noise-scan", "0,1,2"]));
    assert!(scan.contains("nu_a,nu_b,c_hat,std_error,n_required,noise_to_signal\n"));
    assert_eq!(scan.lines().skip_while(|l| !l.starts_with("nu_a")).count(), 4);
}

#[test]
fn too_few_trials_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", EXAMPLE);
    let out = run_with(&cfg, &["montecarlo", "--trials", "50"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_trials"));
}

#[test]
fn dump_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", &format!("{EXAMPLE}noise_a = 0.1\ng_b = 1.25\n").replace("g = 2", "g_a = 0.3"));
    let dumped = stdout(&run_with(&cfg, &["analytic", "--dump-config", "--seed", "99"]));
    assert!(dumped.contains("seed = 99"));
    let again = write_config(&dir, "again.cfg", &dumped);
    assert_eq!(stdout(&run_with(&again, &["analytic", "--dump-config"])), dumped);
    assert_eq!(
        stdout(&run_with(&again, &["analytic"])),
        stdout(&run_with(&cfg, &["analytic"]))
    );
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    for (text, field) in [
        ("prep = 1,0,1,1\npost = 1,0,1,-1\n", "prep"),
        ("prep = 1,0,0,0\npost = 1,0,0,0\ng_b = -2\n", "g_b"),
        ("prep = 1,0,0,0\npost = 1,0,0,0\nn_trials = lots\n", "n_trials"),
        ("prep = 1,0,0,0\npost = 1,0,0,0\ngrid_points = 1\n", "grid"),
    ] {
        let cfg = write_config(&dir, "bad.cfg", text);
        let out = run_with(&cfg, &["analytic"]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(field), "{text}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = cheshire(&["analytic", "--config", "/nonexistent/cheshire.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(&dir, "ok.cfg", EXAMPLE);
    let out = Command::new(env!("CARGO_BIN_EXE_cheshire"))
        .args(["analytic", "--config", cfg.to_str().unwrap()])
        .env("CHESHIRE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meter_file_matches_gaussian() {
    let dir = TempDir::new().unwrap();
    let mut table = String::from("# x psi0\n");
    for i in 0..2001 {
        let x = -20.0 + 0.02 * i as f64;
        let v = (2.0 * std::f64::consts::PI).powf(-0.25) * (-x * x / 4.0).exp();
        table.push_str(&format!("{x} {v:e}\n"));
    }
    std::fs::write(dir.path().join("meter.dat"), table).unwrap();
    let cfg = write_config(&dir, "file.cfg", &format!("{EXAMPLE}psi0_file = meter.dat\n"));
    let text = stdout(&run_with(&cfg, &["analytic"]));
    let a: f64 = value(&text, "c_analytic").parse().unwrap();
    let m: f64 = value(&text, "c_meter").parse().unwrap();
    assert!((a - m).abs() < 1e-8, "{a} vs {m}");
    let mc = stdout(&run_with(&cfg, &["montecarlo", "--trials", "1000"]));
    assert_eq!(value(&mc, "reference"), "grid");
}

#[test]
fn mixed_postselection_runs_analytic_and_sweep() {
    let dir = TempDir::new().unwrap();
    let half: Vec<&str> = (0..16).map(|k| if k == 0 || k == 10 { "0.5" } else { "0" }).collect();
    let text = format!("prep = 1,0,1,0\nnormalize = true\npost_effect = {}\n", half.join(", "));
    let cfg = write_config(&dir, "mixed.cfg", &text);
    let out = stdout(&run_with(&cfg, &["analytic"]));
    assert!(!out.contains("negativity"));
    let sweep = stdout(&run_with(&cfg, &["sweep", "--steps", "3"]));
    assert!(sweep.lines().nth(1).unwrap().ends_with("NaN"));
    assert_eq!(run_with(&cfg, &["montecarlo"]).status.code(), Some(2));
}

#[test]
fn optimize_finds_quarter_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ex.cfg", EXAMPLE);
    let text = stdout(&run_with(&cfg, &["optimize", "--starts", "4"]));
    let g: f64 = value(&text, "g_a_opt").parse().unwrap();
    assert!((g - 2.0).abs() < 1e-6);
    let c: f64 = value(&text, "best_c").parse().unwrap();
    assert!((c - (-1f64).exp()).abs() < 1e-6);
}
