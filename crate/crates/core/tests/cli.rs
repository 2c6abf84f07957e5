use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

use tiltpath::config::ExperimentConfig;
use tiltpath::experiment::{RunManifest, Table1};
use tiltpath::metrics::MetricsReport;

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn tiltpath(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tiltpath"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

const ALL_FILES: [&str; 14] = [
    "reference_solution.json",
    "reference_trajectories.csv",
    "reference_metrics.json",
    "reference_norms.csv",
    "control_solution.json",
    "learned_trajectories.csv",
    "learned_metrics.json",
    "learned_norms.csv",
    "tilting_grid.csv",
    "path_grid.csv",
    "mccann_trajectories.csv",
    "mccann_metrics.json",
    "table1.json",
    "manifest.json",
];

#[test]
fn all_writes_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = shipped("identity.json");
    let res = tiltpath(&["all", "--config", cfg.to_str().unwrap(), "--out", out, "--seed", "4"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ALL_FILES {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    for f in ["reference_trajectories.csv", "learned_trajectories.csv", "mccann_trajectories.csv"] {
        assert_eq!(header(&dir.path().join(f)), "particle,t,x");
    }
    assert_eq!(header(&dir.path().join("reference_norms.csv")), "t,norm");
    assert_eq!(header(&dir.path().join("learned_norms.csv")), "t,norm");
    assert_eq!(header(&dir.path().join("tilting_grid.csv")), "x,t,exp_g");
    assert_eq!(header(&dir.path().join("path_grid.csv")), "x,t,mu,rho_g");
    let grid_rows = std::fs::read_to_string(dir.path().join("path_grid.csv")).unwrap().lines().count();
    assert_eq!(grid_rows, 1 + 200 * 101);
    let traj_rows = std::fs::read_to_string(dir.path().join("mccann_trajectories.csv")).unwrap().lines().count();
    assert_eq!(traj_rows, 1 + 500 * 101);

    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    let table: Table1 = serde_json::from_str(&read("table1.json")).unwrap();
    let methods: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["reference", "learned", "mccann", "ground_truth"]);
    assert!(table.rows[2].rkhs_norm.is_none() && table.rows[3].rkhs_norm.is_none());
    assert!(table.rows[0].rkhs_norm.is_some() && table.rows[1].rkhs_norm.is_some());
    let metrics: MetricsReport = serde_json::from_str(&read("learned_metrics.json")).unwrap();
    assert!((0.0..=1.0).contains(&metrics.fraction_left));

    let manifest: RunManifest = serde_json::from_str(&read("manifest.json")).unwrap();
    assert_eq!(manifest.files.len(), ALL_FILES.len() - 1);
    for entry in &manifest.files {
        let bytes = std::fs::read(dir.path().join(&entry.name)).unwrap();
        assert_eq!(entry.sha256, hex::encode(Sha256::digest(&bytes)), "{}", entry.name);
        assert_eq!(entry.bytes, bytes.len() as u64);
    }
    let mut expected = ExperimentConfig::load(&cfg).unwrap();
    expected.transport.seed = 4;
    assert_eq!(manifest.config, expected);
    assert_eq!(ExperimentConfig::from_json(&serde_json::to_string(&manifest.config).unwrap()).unwrap(), expected);
    assert!(manifest.finished_unix >= manifest.started_unix);
    assert!(manifest.solver.is_some());
}

#[test]
fn single_commands_write_their_files() {
    let cfg = shipped("gaussian_shift.json");
    for (cmd, files) in [
        ("reference", &ALL_FILES[..4]),
        ("learn", &ALL_FILES[4..10]),
        ("mccann", &ALL_FILES[10..12]),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let res = tiltpath(&[cmd, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(res.status.success(), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
        let mut written: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        written.sort();
        let mut want: Vec<String> = files.iter().map(|s| s.to_string()).collect();
        want.sort();
        assert_eq!(written, want, "{cmd}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"grid": {"x_lo": 1, "x_hi": 0, "n_x": 5, "n_t": 5}}"#).unwrap();
    let res = tiltpath(&["mccann", "--config", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    std::fs::write(&bad, r#"{"unknown": 1}"#).unwrap();
    assert_eq!(tiltpath(&["mccann", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    assert_eq!(tiltpath(&["mccann", "--config", missing.to_str().unwrap()]).status.code(), Some(4));

    // output path occupied by a regular file
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = shipped("identity.json");
    let res = tiltpath(&["mccann", "--config", cfg.to_str().unwrap(), "--out", blocker.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));

    assert_ne!(tiltpath(&["sample", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
}
