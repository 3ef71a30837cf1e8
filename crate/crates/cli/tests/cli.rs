use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use optibind_cli::commands::RatesReport;
use optibind_cli::output::{sha256_hex, Manifest};
use optibind_core::Regime;

fn rates_toml(kd: f64, phi: f64, d: f64) -> String {
    format!(
        "seed = 5\n\n[rates]\nmean_frequency_omega_rad_per_s = 1.0\ncoupling_g_rad_per_s = {}\nkd = {kd:?}\nrelative_phase_phi_rad = {phi:?}\nd11_rad_per_s = {d:?}\nd22_rad_per_s = {d:?}\n",
        0.05 * kd
    )
}

fn directional(d: f64) -> String {
    rates_toml(20.0 * PI + PI / 4.0, PI / 4.0, d)
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Run { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, sub: &str, out: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_optibind"))
            .arg(sub)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out(out))
            .args(extra)
            .env_remove("OPTIBIND_THREADS")
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    Manifest::from_json(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_value(path: &Path, quantity: &str, column: usize) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with(&format!("{quantity},"))).unwrap();
    line.split(',').nth(column).unwrap().parse().unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = directional(0.15)
        + "\n[trajectories]\nkind = \"locc\"\nn_traj = 20\nt_final_s = 1.0\nsamples = 2\ndt_s = 0.01\n[evolve]\nt_final_s = 5.0\nsamples = 5\n";
    let run = Run::new(&cfg);
    for sub in ["trajectories", "evolve"] {
        assert_eq!(code(&run.exec(sub, &format!("{sub}-a"), &[])), 0);
        assert_eq!(code(&run.exec(sub, &format!("{sub}-b"), &["--threads", "1"])), 0);
        let (a, b) = (manifest(&run.out(&format!("{sub}-a"))), manifest(&run.out(&format!("{sub}-b"))));
        assert!(!a.files.is_empty());
        assert_eq!(a.files, b.files);
        for f in &a.files {
            let bytes = fs::read(run.out(&format!("{sub}-a")).join(&f.path)).unwrap();
            assert_eq!(bytes, fs::read(run.out(&format!("{sub}-b")).join(&f.path)).unwrap());
            assert_eq!(sha256_hex(&bytes), f.sha256);
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = directional(0.15) + "\n[trajectories]\nn_traj = 4\nt_final_s = 1.0\nsamples = 1\ndt_s = 0.01\n";
    let run = Run::new(&cfg);
    assert_eq!(code(&run.exec("trajectories", "a", &[])), 0);
    assert_eq!(code(&run.exec("trajectories", "b", &["--seed", "99"])), 0);
    assert_eq!(manifest(&run.out("a")).seed, 5);
    assert_eq!(manifest(&run.out("b")).seed, 99);
    assert_ne!(fs::read(run.out("a").join("trajectories.csv")).unwrap(), fs::read(run.out("b").join("trajectories.csv")).unwrap());
}

#[test]
fn manifest_round_trips_and_carries_config_hash() {
    let cfg = directional(0.15);
    let run = Run::new(&cfg);
    assert_eq!(code(&run.exec("rates", "r", &[])), 0);
    let text = fs::read_to_string(run.out("r").join("manifest.json")).unwrap();
    let m = Manifest::from_json(&text).unwrap();
    assert_eq!(m.to_json().unwrap(), text);
    assert_eq!(m.config_sha256, sha256_hex(cfg.as_bytes()));
    assert_eq!(m.subcommand, "rates");
    let csv = fs::read_to_string(run.out("r").join("rates.csv")).unwrap();
    assert!(csv.starts_with(&format!("# optibind rates schema_version=1 config_sha256={}\n", m.config_sha256)));
}

#[test]
fn rates_json_round_trips_and_flags_directional_point() {
    let run = Run::new(&directional(0.15));
    let out = run.exec("rates", "r", &[]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("maximally unidirectional"));
    let text = fs::read_to_string(run.out("r").join("rates.json")).unwrap();
    let report: RatesReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
    assert!(report.maximally_unidirectional);
    assert_eq!(report.regime.dominant, Regime::Directional);
    let g_r = csv_value(&run.out("r").join("rates.csv"), "g_r", 1);
    assert_eq!(g_r, report.couplings.g_r);
}

#[test]
fn zero_phase_gives_exactly_reciprocal_coupling() {
    let run = Run::new(&rates_toml(20.0 * PI + 0.3, 0.0, 0.15));
    assert_eq!(code(&run.exec("rates", "r", &[])), 0);
    let report: RatesReport = serde_json::from_str(&fs::read_to_string(run.out("r").join("rates.json")).unwrap()).unwrap();
    assert_eq!(report.couplings.g_a, 0.0);
    assert!(!report.maximally_unidirectional);
}

#[test]
fn unknown_key_is_a_config_error() {
    let run = Run::new(&(directional(0.15) + "\n[evolve]\nt_final = 3.0\n"));
    let out = run.exec("evolve", "e", &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_final"));
}

#[test]
fn config_errors_exit_two() {
    let missing = Command::new(env!("CARGO_BIN_EXE_optibind"))
        .args(["rates", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);
    // Cross diffusion larger than the local recoil.
    assert_eq!(code(&Run::new(&directional(0.01)).exec("rates", "r", &[])), 2);
    assert_eq!(code(&Run::new(&directional(0.15)).exec("rates", "r", &["--threads", "0"])), 2);
    assert_eq!(code(&Run::new(&directional(0.15)).exec("squeeze", "s", &[])), 2);
}

#[test]
fn infeasible_feedforward_exits_three() {
    let run = Run::new(&(directional(0.06) + "\n[trajectories]\nkind = \"locc\"\nn_traj = 2\n"));
    let out = run.exec("trajectories", "t", &[]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("feasible measurement rates") && err.contains("hint"), "{err}");
}

#[test]
fn ep_scan_tolerance_failure_exits_four_with_outputs() {
    let base = directional(0.15) + "\n[ep_scan]\npoints = 5\n";
    let run = Run::new(&base);
    assert_eq!(code(&run.exec("ep-scan", "ok", &[])), 0);
    let strict = Run::new(&(base + "[tolerances]\nep_relative = 1e-300\n"));
    assert_eq!(code(&strict.exec("ep-scan", "strict", &[])), 4);
    assert!(strict.out("strict").join("ep_scan.csv").exists());
    assert!(strict.out("strict").join("manifest.json").exists());
}

#[test]
fn reheating_split_matches_cross_diffusion() {
    // Recoil-correlated point: g_a = 0 and Re D12 = G/kd.
    let kd = 20.0 * PI + PI / 2.0;
    let run = Run::new(&rates_toml(kd, 0.0, 0.06));
    assert_eq!(code(&run.exec("reheating", "h", &[])), 0);
    let path = run.out("h").join("reheating.csv");
    let split = csv_value(&path, "split", 1);
    let two_re = csv_value(&path, "two_re_d12", 1);
    assert!((split - two_re).abs() < 1e-15, "{split} {two_re}");
    assert!((csv_value(&path, "relative_split", 1) - 2.0 * 0.05 / 0.06).abs() < 1e-12);
}

#[test]
fn squeeze_reaches_stationary_floor() {
    let cfg = rates_toml(20.0 * PI, 0.0, 0.5) + "\n[squeeze]\nt_final_s = 100.0\nsamples = 10\n";
    let run = Run::new(&cfg);
    assert_eq!(code(&run.exec("squeeze", "s", &[])), 0);
    let m = manifest(&run.out("s"));
    let floor = m.summary["stationary_prediction"].as_f64().unwrap();
    let ode = m.summary["final_var_plus_ode"].as_f64().unwrap();
    assert!((floor - 5.0).abs() < 1e-12);
    assert!((ode - 5.0).abs() / 5.0 < 1e-3, "{ode}");
}

#[test]
fn phase_diagram_grid_is_fast() {
    let cfg = directional(0.15) + "\n[phase_diagram]\nkind = \"regime\"\nphi_points = 100\nkd_points = 100\n";
    let run = Run::new(&cfg);
    let start = Instant::now();
    assert_eq!(code(&run.exec("phase-diagram", "p", &[])), 0);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "{elapsed} s");
    assert_eq!(manifest(&run.out("p")).files[0].rows, 10_000);
}

#[test]
fn thread_count_falls_back_to_environment() {
    let run = Run::new(&directional(0.15));
    let out = Command::new(env!("CARGO_BIN_EXE_optibind"))
        .arg("rates")
        .arg("--config")
        .arg(run.dir.path().join("run.toml"))
        .arg("--out")
        .arg(run.out("r"))
        .env("OPTIBIND_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(manifest(&run.out("r")).threads, 3);
}

#[test]
fn stationary_entanglement_scan_is_separable() {
    let cfg = rates_toml(100.0, 0.0, 0.15) + "\n[entanglement]\nconfigurations = 50\nkd_min = 80.0\nkd_max = 120.0\n";
    let run = Run::new(&cfg);
    assert_eq!(code(&run.exec("entanglement", "e", &[])), 0);
    let m = manifest(&run.out("e"));
    assert_eq!(m.summary["failed"].as_u64(), Some(0));
    assert!(m.summary["max_log_negativity"].as_f64().unwrap() < 1e-12);
}
