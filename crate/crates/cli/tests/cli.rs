use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const QUADRATIC: &str = r#"{
  "name": "q",
  "model": {"potential": {"kind": "quadratic"}, "sigma2": 0.2},
  "init": {"kind": "uniform_box", "half_length": 4.0},
  "schedule": {"dt": 0.01, "n_steps": 5},
  "replicates": 3,
  "seed": 11,
  "n_samples": 150
}"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn root(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_langevin"))
            .args(args)
            .env("LANGEVIN_OUTPUT_ROOT", self.root())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn generate_writes_six_snapshots_per_replicate_with_a_hashed_manifest() {
    let sb = Sandbox::new();
    let cfg = sb.file("q.json", QUADRATIC);
    sb.ok(&["generate", "--config", cfg.to_str().unwrap()]);
    let dir = sb.root().join("q");
    for r in 0..3 {
        let snaps = std::fs::read_to_string(dir.join(format!("replicate_{r}/snapshots.csv"))).unwrap();
        let mut lines = snaps.lines();
        assert_eq!(lines.next(), Some("time,sample_id,x1,x2"));
        assert_eq!(lines.count(), 6 * 150);
    }
    let manifest: Value = serde_json::from_slice(&read(&dir.join("manifest.json"))).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 6);
    for f in files {
        let bytes = read(&dir.join(f["path"].as_str().unwrap()));
        assert_eq!(f["sha256"].as_str().unwrap(), langevin_cli::output::sha256_hex(&bytes));
    }
    let seeds: Vec<u64> = (0..3)
        .map(|r| manifest["seeds"][format!("replicate_{r}")].as_u64().unwrap())
        .collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);
}

#[test]
fn reruns_are_byte_identical() {
    let sb = Sandbox::new();
    let cfg = sb.file("q.json", QUADRATIC);
    let c = cfg.to_str().unwrap();
    sb.ok(&["generate", "--config", c, "--out", "a"]);
    sb.ok(&["generate", "--config", c, "--out", "b"]);
    for name in ["replicate_2/trajectories.csv", "replicate_2/snapshots.csv", "manifest.json"] {
        assert_eq!(read(&sb.root().join("a").join(name)), read(&sb.root().join("b").join(name)), "{name}");
    }
    let data = sb.root().join("a/replicate_0/snapshots.csv");
    let d = data.to_str().unwrap();
    sb.ok(&["estimate", "--data", d, "--out", "e1", "--seed", "3"]);
    sb.ok(&["estimate", "--data", d, "--out", "e2", "--seed", "3"]);
    assert_eq!(read(&sb.root().join("e1/result.json")), read(&sb.root().join("e2/result.json")));
}

#[test]
fn estimate_dispatches_on_the_csv_header() {
    let sb = Sandbox::new();
    let cfg = sb.file("q.json", QUADRATIC);
    sb.ok(&["generate", "--config", cfg.to_str().unwrap()]);
    let dir = sb.root().join("q/replicate_0");
    for (file, setting) in [("snapshots.csv", "marginals"), ("trajectories.csv", "trajectories")] {
        let data = dir.join(file);
        let out = format!("est_{setting}");
        sb.ok(&["estimate", "--data", data.to_str().unwrap(), "--out", &out]);
        let res: Value = serde_json::from_slice(&read(&sb.root().join(&out).join("result.json"))).unwrap();
        assert_eq!(res["data_setting"], setting);
        assert_eq!(res["coefficients"].as_array().unwrap().len(), 14);
    }
}

#[test]
fn evaluating_the_truth_against_itself_is_exact() {
    let sb = Sandbox::new();
    let cfg = sb.file("q.json", QUADRATIC);
    sb.ok(&["generate", "--config", cfg.to_str().unwrap()]);
    let traj = sb.root().join("q/replicate_0/trajectories.csv");
    sb.ok(&["estimate", "--data", traj.to_str().unwrap(), "--out", "e"]);

    // a result carrying the exact quadratic coefficients
    let path = sb.root().join("e/result.json");
    let mut res: Value = serde_json::from_slice(&read(&path)).unwrap();
    for c in res["coefficients"].as_array_mut().unwrap() {
        let alpha: Vec<u64> = c["alpha"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        c["value"] = if alpha == [2, 0] || alpha == [0, 2] { 1.0.into() } else { 0.0.into() };
    }
    res["sigma2_hat"] = 0.2.into();
    let exact = sb.file("exact.json", &res.to_string());
    let truth = sb.file("truth.json", r#"{"potential": {"kind": "quadratic"}, "sigma2": 0.2}"#);
    let stdout = sb.ok(&[
        "evaluate",
        "--truth",
        truth.to_str().unwrap(),
        "--result",
        exact.to_str().unwrap(),
        "--result",
        exact.to_str().unwrap(),
        "--out",
        "ev",
    ]);
    assert!(stdout.contains("cosine_grid,2,1.0,0.0,1.00 ± 0.00"), "{stdout}");
    let csv = std::fs::read_to_string(sb.root().join("ev/metrics.csv")).unwrap();
    let metrics: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert!(metrics.contains(&"drift_mae_grid") && metrics.contains(&"drift_mae_gibbs"));
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: f64 = f[3].parse().unwrap();
        let want = if f[2] == "cosine_grid" { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-12, "{line}");
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let sb = Sandbox::new();
    let stationary_uniform = QUADRATIC.replace("\"replicates\": 3", "\"setting\": \"stationary\"");
    let cfg = sb.file("s.json", &stationary_uniform);
    let out = sb.run(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stationary"));

    let broken = sb.file("b.json", &QUADRATIC.replace("\"dt\": 0.01", "\"dt\": \"fast\""));
    let out = sb.run(&["generate", "--config", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));

    let missing = sb.run(&["estimate", "--data", "/nonexistent/x.csv", "--out", "e"]);
    assert_eq!(code(&missing), 2);

    let unknown = sb.run(&["reproduce", "table9"]);
    assert_eq!(code(&unknown), 2);
}

#[test]
fn malformed_csv_reports_the_row() {
    let sb = Sandbox::new();
    let bad = sb.file("bad.csv", "time,sample_id,x1\n0.0,0,1.0\n0.0,1,oops\n");
    let out = sb.run(&["estimate", "--data", bad.to_str().unwrap(), "--out", "e"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let unknown = sb.file("u.csv", "a,b\n1,2\n");
    let out = sb.run(&["estimate", "--data", unknown.to_str().unwrap(), "--out", "e"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn divergent_simulation_exits_with_code_three() {
    let sb = Sandbox::new();
    let cfg = sb.file(
        "d.json",
        &QUADRATIC
            .replace("\"dt\": 0.01", "\"dt\": 5.0")
            .replace("\"n_steps\": 5", "\"n_steps\": 40"),
    );
    let out = sb.run(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fisher_sweep_reports_a_constant_diffusion_column() {
    let sb = Sandbox::new();
    let cfg = sb.file(
        "f.json",
        r#"{"model": {"potential": {"kind": "quadratic"}, "sigma2": 0.2},
            "family": "uniform", "levels": [1, 2, 3], "dt": 0.001,
            "n_samples": 200, "replicates": 2}"#,
    );
    sb.ok(&["fisher", "--config", cfg.to_str().unwrap(), "--out", "f"]);
    let trends: Value = serde_json::from_slice(&read(&sb.root().join("f/trends.json"))).unwrap();
    assert_eq!(trends["diffusion_theoretical_constant"], true);
    let csv = std::fs::read_to_string(sb.root().join("f/fisher.csv")).unwrap();
    let diffusion: Vec<f64> = csv
        .lines()
        .filter(|l| l.split(',').nth(3) == Some("sigma2"))
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(diffusion.len(), 6);
    // d / (2σ⁴) per transition times N
    assert!(diffusion.iter().all(|v| (v - 200.0 * 2.0 / (2.0 * 0.04)).abs() < 1e-6));
}

#[test]
fn regimes_produce_one_result_each() {
    let sb = Sandbox::new();
    let cfg = sb.file("q.json", QUADRATIC);
    sb.ok(&["generate", "--config", cfg.to_str().unwrap()]);
    let data = sb.root().join("q/replicate_0/snapshots.csv");
    sb.ok(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--out",
        "r",
        "--regimes",
        "0,0.025,0.05",
    ]);
    let res: Value = serde_json::from_slice(&read(&sb.root().join("r/result.json"))).unwrap();
    assert_eq!(res.as_array().unwrap().len(), 2);
}

#[test]
fn stationary_datasets_carry_the_warning_flag() {
    let sb = Sandbox::new();
    let cfg = sb.file(
        "s.json",
        r#"{"name": "s",
            "model": {"potential": {"kind": "quadratic"}, "sigma2": 0.2},
            "init": {"kind": "gibbs", "model": {"potential": {"kind": "quadratic"}, "sigma2": 0.2}},
            "schedule": {"dt": 0.01, "n_steps": 5, "substeps": 10},
            "setting": "stationary", "seed": 4, "n_samples": 300}"#,
    );
    sb.ok(&["generate", "--config", cfg.to_str().unwrap()]);
    let data = sb.root().join("s/replicate_0/snapshots.csv");
    sb.ok(&["estimate", "--data", data.to_str().unwrap(), "--out", "e"]);
    let res: Value = serde_json::from_slice(&read(&sb.root().join("e/result.json"))).unwrap();
    assert_eq!(res["stationary_warning"], true);
    let records = res["stationarity"].as_array().unwrap();
    // five consecutive pairs plus first against last
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r["p_value"].as_f64().unwrap() > 0.05 / 6.0));
}
