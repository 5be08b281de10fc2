//! Binary-level checks: exit codes, artifact files and byte stability.

use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_oscchain");

const BASE: &str = "
    omega_first = 0.8
    omega_last  = 2.0
    epsilon     = 0.4
    gamma       = 2.0
    t_cold      = 1.0
    t_hot       = 2.0
";

struct Workdir(PathBuf);

impl Workdir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("oscchain-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.0.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Workdir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn steady_writes_json_to_stdout() {
    let dir = Workdir::new("steady");
    let config = dir.file("chain.conf", BASE);
    let out = run(&["steady", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["regime"], "refrigerator");
    assert!(v["entropy_rate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn quiet_suppresses_progress_notes() {
    let dir = Workdir::new("quiet");
    let config = dir.file("chain.conf", BASE);
    let noisy = run(&["steady", config.to_str().unwrap()]);
    assert!(!noisy.stderr.is_empty());
    let quiet = run(&["steady", "--quiet", config.to_str().unwrap()]);
    assert!(quiet.status.success());
    assert!(quiet.stderr.is_empty(), "{}", String::from_utf8_lossy(&quiet.stderr));
}

#[test]
fn sweep_artifacts_are_byte_stable_with_sidecar() {
    let dir = Workdir::new("sweep");
    let config = dir.file(
        "chain.conf",
        &format!("{BASE}\n[sweep]\nlo = 0\nhi = 2\nsteps = 50\n"),
    );
    let csv_a = dir.path("a.csv");
    let csv_b = dir.path("b.csv");
    for csv in [&csv_a, &csv_b] {
        let out = run(&[
            "sweep",
            "--quiet",
            "--out",
            csv.to_str().unwrap(),
            config.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    let a = std::fs::read(&csv_a).unwrap();
    let b = std::fs::read(&csv_b).unwrap();
    assert_eq!(a, b, "sweep CSV must be byte-stable across runs");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("omega1_over_omega2,Q1,Q2,W,Pi,regime,fom\n"));
    assert_eq!(text.lines().count(), 51);
    let meta = std::fs::read_to_string(dir.path("a.csv.meta.json")).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(meta["command"], "sweep");
    assert_eq!(meta["rows"], "50");
}

#[test]
fn bad_config_exits_2_and_names_the_key() {
    let dir = Workdir::new("badkey");
    let config = dir.file("chain.conf", &format!("{BASE}\ngama = 1.0\n"));
    let out = run(&["steady", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
    let out = run(&["steady", dir.path("missing.conf").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstable_chain_exits_3() {
    let dir = Workdir::new("unstable");
    // ε + η well above ω with weak damping: non-Hurwitz drift.
    let config = dir.file(
        "chain.conf",
        "
        omega_first = 1.0
        omega_last  = 1.0
        epsilon     = 0.6
        eta         = 0.5
        gamma       = 0.1
        t_cold      = 0.5
        t_hot       = 1.0
        ",
    );
    let out = run(&["steady", "--quiet", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_budget_overflow_exits_5() {
    let dir = Workdir::new("budget");
    // η ≠ 0 forces the dense solver, whose state budget 5³ = 125 exceeds.
    let config = dir.file(
        "chain.conf",
        "
        n_sites     = 3
        omega_first = 0.9
        omega_last  = 1.0
        epsilon     = 0.1
        eta         = 0.05
        gamma       = 1.0
        t_cold      = 0.5
        t_hot       = 1.0
        [fock]
        dim = 5
        ",
    );
    let out = run(&["oracle-compare", "--quiet", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_compare_reports_deviations() {
    let dir = Workdir::new("oracle");
    let config = dir.file(
        "chain.conf",
        "
        omega_first = 0.9
        omega_last  = 1.0
        epsilon     = 0.2
        gamma       = 0.7
        t_cold      = 0.35
        t_hot       = 0.6
        [fock]
        dim = 10
        ",
    );
    let out = run(&["oracle-compare", "--quiet", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_abs_deviation_number"].as_f64().unwrap() < 1e-4);
}

#[test]
fn collision_with_too_few_taus_exits_6() {
    let dir = Workdir::new("taus");
    let config = dir.file(
        "chain.conf",
        &format!("{BASE}\n[collision]\ntaus = 0.1, 0.05\ndim = 4\n"),
    );
    let out = run(&["collision", "--quiet", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn collision_writes_csv_and_extrapolation_json() {
    let dir = Workdir::new("collision");
    let config = dir.file(
        "chain.conf",
        "
        omega_first = 0.9
        omega_last  = 1.0
        epsilon     = 0.2
        gamma       = 0.4
        t_cold      = 0.35
        t_hot       = 0.6
        [collision]
        taus = 0.2, 0.1, 0.05
        dim = 5
        ",
    );
    let csv = dir.path("rates.csv");
    let out = run(&[
        "collision",
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("tau,dQ1_rate,dQN_rate,dW_rate,Sigma\n"));
    assert_eq!(text.lines().count(), 4);
    let json = std::fs::read_to_string(dir.path("rates.csv.extrapolation.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["q_first_fit"]["intercept"].is_number());
    assert!(dir.path("rates.csv.meta.json").exists());
}
