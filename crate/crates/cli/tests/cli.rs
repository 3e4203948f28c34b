use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "master_seed = 7\nn_values = [64]\ntrials = 10\n\
    [kernel]\ntype = \"fractional\"\nhurst = 0.7\nK = 256\ntruncation_override = true\n\
    [memory]\nnu = 1.0\nform = \"constant\"\n";

const COROLLARY: &str = "master_seed = 7\nn_values = [4, 64, 1024]\ntrials = 100\n\
    [kernel]\ntype = \"iid\"\nhurst = 0.5\n[memory]\nnu = 1.0\nform = \"constant\"\n";

fn memwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memwalk")).args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_one_row_per_trial_and_grid_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = memwalk(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("paths.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,trial,t,s_n,r_n"));
    assert_eq!(lines.count(), 10 * 65);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(memwalk(&["--workers", "1", "simulate", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(memwalk(&["--workers", "8", "simulate", "--config", s(&cfg), "--out", s(&b)]).status.success());
    let pa = std::fs::read(a.join("paths.csv")).unwrap();
    assert_eq!(pa, std::fs::read(b.join("paths.csv")).unwrap());

    let c = dir.path().join("c");
    assert!(memwalk(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "8"]).status.success());
    assert_ne!(pa, std::fs::read(c.join("paths.csv")).unwrap());
}

#[test]
fn keep_innovations_writes_them() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = memwalk(&["simulate", "--config", s(&cfg), "--out", s(&out), "--keep-innovations"]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(out.join("innovations.csv")).unwrap().lines().count() > 10);
}

#[test]
fn corollary_suite_passes_and_writes_the_ratio_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", COROLLARY);
    let out = dir.path().join("out");
    let o = memwalk(&["verify", "--config", s(&cfg), "--out", s(&out), "--suite", "corollary"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("var_ratio.csv")).unwrap();
    assert!(table.starts_with("n,var_R_exact,normalizer,sigma2,ratio"));
    assert_eq!(table.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "pass");
    assert!(out.join("report.txt").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let unknown = write_config(&dir, "u.toml", &format!("{COROLLARY}bogus = 1\n"));
    let o = memwalk(&["verify", "--config", s(&unknown), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(&dir, "c.toml", COROLLARY);
    let o = memwalk(&["verify", "--config", s(&cfg), "--out", s(&out), "--suite", "theorem_nu_zero"]);
    assert_eq!(o.status.code(), Some(2));
    let o = memwalk(&["verify", "--config", s(&cfg), "--out", s(&out), "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));

    let few = write_config(&dir, "few.toml", &COROLLARY.replace("trials = 100", "trials = 5"));
    let o = memwalk(&["verify", "--config", s(&few), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fbm_marginal_variance_at_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f");
    let o = memwalk(&[
        "--workers", "4", "fbm", "--n", "1", "--hurst", "0.7", "--trials", "100000", "--seed", "3", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("fbm.csv")).unwrap();
    let ends: Vec<f64> = text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse::<f64>().unwrap() == 1.0).then(|| f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(ends.len(), 100_000);
    let var = ends.iter().map(|x| x * x).sum::<f64>() / ends.len() as f64;
    assert!((var - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn replay_reproduces_the_recorded_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(memwalk(&["simulate", "--config", s(&cfg), "--out", s(&a)]).status.success());
    std::fs::remove_file(&cfg).unwrap();
    let o = memwalk(&["replay", "--manifest", s(&a.join("manifest.json")), "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(a.join("paths.csv")).unwrap(), std::fs::read(b.join("paths.csv")).unwrap());
}
