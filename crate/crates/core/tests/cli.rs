use std::path::Path;
use std::process::{Command, Output};

const SHIPPED: &str = include_str!("../configs/flat_m3_scalar.toml");

fn run(args: &[&str], config: &str, out: &Path) -> Output {
    let cfg = out.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_parametrix"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .unwrap()
}

#[test]
fn malformed_config_exits_with_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["coeffs"], &SHIPPED.replace("ray_length = 0.5", "ray_length = -0.5"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coeffs.ray_length"));
    let out = run(&["coeffs"], "seed = 1\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacetime"));
}

#[test]
fn spacelike_seed_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SHIPPED.replace("ring = 360\n", "seeds = [[0.0, 0.0, 0.0, 0.1, 1.0, 0.0]]\n");
    let out = run(&["predict-r"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NonNullSeed"));
}

#[test]
fn reruns_write_byte_identical_json() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        for cmd in ["predict-r", "kernel"] {
            assert_eq!(run(&[cmd], SHIPPED, dir.path()).status.code(), Some(0));
        }
    }
    for file in ["predict-r.json", "kernel.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}
