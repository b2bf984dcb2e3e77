use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcl")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "domain": {"Lx": 1.0, "Ly": 1.0, "nx": 6, "ny": 6, "robin_edges": ["right"]},
        "time": {"T": 0.02, "dt": 0.01},
        "model": {
            "lambda": 1.0, "alpha": 2.0, "K2": 1.0,
            "g": {"coefficients": [1.0, 1.0], "exponents": [0.0, 1.0]},
            "b": {"variant": "saturating", "r": 1.0, "sigma": 0.5}
        },
        "bc": {"phi": 0.1},
        "ic": {
            "u": {"preset": "cosine_mode", "amplitude": 0.5, "offset": 1.0, "kx": 1.0, "ky": 1.0},
            "v": {"preset": "constant", "value": 0.2}
        }
    });
    let path = dir.join("sim.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_reproducible_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = fcl(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["snapshot_00000.csv", "snapshot_00002.csv", "energy.json", "energy.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["complete"], true);
    assert_eq!(meta["steps"], 2);
}

#[test]
fn constitutive_table_from_simulation_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("table.csv");
    let o = fcl(&["constitutive", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("xi,K1,K1_prime,H,lower_A1,upper_A1\n"));
    assert_eq!(text.lines().count(), 62);
    assert!(out.with_extension("json").exists());
}

#[test]
fn quick_check_passes() {
    let o = fcl(&["check", "--quick"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.contains("PASS")));
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"domain": {"nx": 0}}"#).unwrap();
    let o = fcl(&["simulate", "--config", bad.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = fcl(&["experiment", "no-such-kind", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fcl"))
        .args(["experiment", "convergence", "--out", tmp.path().to_str().unwrap()])
        .env("FCL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn convergence_experiment_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("conv.json");
    fs::write(&cfg, r#"{"convergence": {"grids": [8, 16], "t_final": 0.1, "coarse_steps": 2}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = fcl(&["experiment", "convergence", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("n,h,dt,steps,l2_error,order"));
    assert_eq!(csv.lines().count(), 3);
}
