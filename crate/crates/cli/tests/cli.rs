//! End-to-end runs of the `wavemode` binary on small scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MEDIUM: &str = r#"
[waveguide]
n1 = 1.2
d = 1.0
mode_ratio = 4.4

[medium]
a = 1.0

[[medium.terms]]
family = "constant"
value = 0.3

[[medium.terms]]
family = "gaussian_bump"
amplitude = 1.0
center = 0.55
width = 0.1
"#;

fn scenario(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn wavemode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavemode")).args(args).output().unwrap()
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    wavemode(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Numbers after the last colon on the first line containing `key`.
fn numbers_after(summary: &str, key: &str) -> Vec<f64> {
    let line = summary.lines().find(|l| l.contains(key)).unwrap_or_else(|| panic!("no `{key}` line in\n{summary}"));
    let tail = &line[line.rfind(':').unwrap() + 1..];
    tail.split("<=").map(|s| s.trim().parse().unwrap()).collect()
}

#[test]
fn modes_csv_has_one_row_per_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(&dir, "modes.toml", &format!("pipeline = \"modes\"\n{MEDIUM}"));
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("modes.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("j,sigma,beta,zeta,amplitude"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], (i + 1).to_string());
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("N = 4"));
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn decay_summary_orders_the_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(&dir, "decay.toml", &format!("pipeline = \"decay\"\n{MEDIUM}"));
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let v = numbers_after(&summary, "min Lambda <= Lambda_inf <= mean Lambda");
    assert_eq!(v.len(), 3);
    assert!(v[0] <= v[1] && v[1] <= v[2], "{v:?}");
    assert!(summary.contains("fitted slope"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
}

#[test]
fn montecarlo_is_byte_identical_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let text = format!("pipeline = \"montecarlo\"\nseed = 11\n{MEDIUM}\n[montecarlo]\nn_paths = 5000\n");
    let cfg = scenario(&dir, "mc.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&cfg, out, &["--threads", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["montecarlo.csv", "local_time.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let c = dir.path().join("c");
    assert!(run(&cfg, &c, &["--seed", "12"]).status.success());
    assert_ne!(fs::read(a.join("montecarlo.csv")).unwrap(), fs::read(c.join("montecarlo.csv")).unwrap());
    assert!(fs::read_to_string(c.join("manifest.txt")).unwrap().contains("seed = 12"));
}

#[test]
fn validate_prints_a_rerunnable_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(&dir, "p.toml", &format!("pipeline = \"power\"\n{MEDIUM}"));
    let o = wavemode(&["validate", cfg.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = String::from_utf8(o.stdout).unwrap();
    for key in ["seed = 5", "z_points = 101", "spectral_cutoff", "[continuum]", "[regime]", "k = "] {
        assert!(manifest.contains(key), "missing {key} in\n{manifest}");
    }
    let again = scenario(&dir, "again.toml", &manifest);
    let o2 = wavemode(&["validate", again.to_str().unwrap()]);
    assert!(o2.status.success(), "{}", stderr(&o2));
    assert_eq!(String::from_utf8(o2.stdout).unwrap(), manifest);
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let dir = TempDir::new().unwrap();
    let typo = scenario(&dir, "typo.toml", &format!("pipeline = \"modes\"\n{MEDIUM}").replace("d = 1.0", "depth = 1.0"));
    let o = wavemode(&["validate", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    let bad = scenario(&dir, "bad.toml", &format!("pipeline = \"modes\"\n{MEDIUM}").replace("n1 = 1.2", "n1 = 0.9"));
    let o = wavemode(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let o = wavemode(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3_with_the_error_name() {
    let dir = TempDir::new().unwrap();
    let text = format!("pipeline = \"continuum-check\"\n{MEDIUM}\n[continuum]\nladder = [5, 10]\n");
    let cfg = scenario(&dir, "cc.toml", &text);
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("KernelNotBandLimited"), "{}", stderr(&o));
}
