//! Drives the binary end to end through every subcommand on a shrunken
//! scenario.

use extorq::harness::{experiment_to_doc, ExperimentConfig, TextDoc};
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_extorq")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("extorq-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path) -> PathBuf {
    let mut config = ExperimentConfig::planar2();
    config.train_duration = 6.0;
    config.eval_duration = 4.0;
    config.components = 5;
    config.support_points = 10;
    config.excitation.ga.population = 10;
    config.excitation.ga.generations = 6;
    config.ext_steps.retain(|s| s.time < 3.5);
    let path = dir.join("config.txt");
    std::fs::write(&path, experiment_to_doc(&config).render()).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let output = Command::new(bin()).args(args).output().expect("spawn");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn full_subcommand_flow() {
    let dir = workdir("flow");
    let config = small_config(&dir);
    let config = config.to_str().unwrap();
    let out = dir.join("artifacts");
    let out_s = out.to_str().unwrap();

    run_ok(&["excite", "--config", config, "--out", out_s]);
    assert!(out.join("excitation.txt").exists());
    assert!(out.join("trajectory.csv").exists());

    let excitation = out.join("excitation.txt");
    run_ok(&[
        "simulate",
        "--config",
        config,
        "--excitation",
        excitation.to_str().unwrap(),
        "--kind",
        "free",
        "--out",
        out_s,
    ]);
    run_ok(&[
        "simulate",
        "--config",
        config,
        "--excitation",
        excitation.to_str().unwrap(),
        "--kind",
        "loaded",
        "--out",
        out_s,
    ]);
    assert!(out.join("free.csv").exists());
    assert!(out.join("loaded.csv").exists());

    run_ok(&[
        "train",
        "--config",
        config,
        "--data",
        out.join("free.csv").to_str().unwrap(),
        "--out",
        out_s,
    ]);
    assert!(out.join("kmp_set.txt").exists());
    assert!(out.join("gp_set.txt").exists());
    assert!(out.join("gmm_j0.txt").exists());

    for observer in ["kmp-akf", "gp-akf", "innovation-akf", "static-kf"] {
        run_ok(&[
            "estimate",
            "--config",
            config,
            "--data",
            out.join("loaded.csv").to_str().unwrap(),
            "--models",
            out_s,
            "--observer",
            observer,
            "--out",
            out_s,
        ]);
        assert!(out.join(format!("estimates_{observer}.csv")).exists());
    }

    run_ok(&[
        "report",
        "--config",
        config,
        "--estimates",
        out.join("estimates_kmp-akf.csv").to_str().unwrap(),
        "--truth",
        out.join("loaded.csv").to_str().unwrap(),
        "--label",
        "kmp-akf",
        "--out",
        out_s,
    ]);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    let doc = TextDoc::parse(&report, "report", 1).unwrap();
    assert_eq!(doc.get_slice("joint_rmse").unwrap().len(), 2);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bench_aggregates_over_seeds() {
    let dir = workdir("bench");
    let config = small_config(&dir);
    let out = dir.join("bench");
    run_ok(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("seed3/report.txt").exists());
    assert!(out.join("seed4/report.txt").exists());
    let summary = std::fs::read_to_string(out.join("report.txt")).unwrap();
    let doc = TextDoc::parse(&summary, "bench-report", 1).unwrap();
    assert_eq!(doc.get_u64("seeds").unwrap(), 2);
    let mean = doc.get_slice("kmp-akf.mean_joint_rmse").unwrap();
    assert_eq!(mean.len(), 2);
    assert!(mean.iter().all(|v| v.is_finite() && *v > 0.0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn failures_exit_nonzero_with_stage_tag() {
    let dir = workdir("fail");
    // missing config file
    let output = Command::new(bin())
        .args(["train", "--config", "/nonexistent/cfg.txt", "--data", "x.csv"])
        .output()
        .unwrap();
    assert!(!output.status.success());

    // malformed data file hits the load stage
    let config = small_config(&dir);
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "not a trajectory\n").unwrap();
    let output = Command::new(bin())
        .args([
            "train",
            "--config",
            config.to_str().unwrap(),
            "--data",
            bad.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("[stage=load]"),
        "stderr missing stage tag: {stderr}"
    );
    std::fs::remove_dir_all(&dir).ok();
}
