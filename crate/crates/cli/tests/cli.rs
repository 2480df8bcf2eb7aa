//! End-to-end run of every subcommand on a coarse diffusion configuration.

use std::path::Path;
use std::process::Command;

fn pgdschwarz(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_pgdschwarz")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn offline_online_compare_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/test1.toml")).unwrap();
    let config = dir.path().join("coarse.toml");
    std::fs::write(&config, text.replace("mu = 1e-2\nlambda = 1e-1", "mu = 1.0\nlambda = 1.0")).unwrap();
    let (cfg, out) = (config.to_str().unwrap(), dir.path().join("run"));
    let out = out.to_str().unwrap();

    pgdschwarz(&["offline", "--config", cfg, "--out", out, "--workers", "1"]);
    for f in ["config.toml", "amplitudes.csv", "offline_summary.json", "offline_timing.json", "surrogates"] {
        assert!(Path::new(out).join(f).exists(), "missing {f}");
    }

    let stdout = pgdschwarz(&["online", "--config", cfg, "--out", out, "--mu", "3", "--mu", "30"]);
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    assert!(stdout.lines().all(|l| l.contains("converged=true")), "{stdout}");
    for f in ["summary.json", "timing.json", "residuals.csv", "field.vtk"] {
        assert!(Path::new(out).join("online/3").join(f).exists(), "missing online/3/{f}");
    }

    pgdschwarz(&["compare", "--config", cfg, "--out", out, "--seed", "5"]);
    let csv = std::fs::read_to_string(Path::new(out).join("compare.csv")).unwrap();
    assert!(csv.starts_with("mu,pgd_error,ddfem_error"));
    assert_eq!(csv.lines().count(), 51);

    pgdschwarz(&["report", "--out", out]);
    let report = std::fs::read_to_string(Path::new(out).join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3, "{report}");

    let bad = Command::new(env!("CARGO_BIN_EXE_pgdschwarz"))
        .args(["online", "--config", cfg, "--out", out, "--mu", "500"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
