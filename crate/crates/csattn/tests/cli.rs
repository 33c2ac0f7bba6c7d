//! Exercises the binary end to end: subcommand sequencing, flag
//! overrides, and exit codes.

use csattn::calibration::{BaseLevel, EpsilonSchedule, GridDims};
use csattn::pipeline::{PipelineConfig, WorkloadConfig};
use csattn::workloads::WorkloadPreset;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csattn"))
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let mut config = PipelineConfig::default();
    config.grid = GridDims {
        timesteps: 2,
        layers: 2,
        heads: 2,
    };
    config.schedule = EpsilonSchedule::new(BaseLevel::Fixed { base: 0.95 }, 0.99, 8.0, 2).unwrap();
    config.mask_prompts = 4;
    config.similarity_prompts = 2;
    config.eval_prompts = 1;
    config.workload = WorkloadConfig::Synthetic {
        preset: WorkloadPreset::DeskDefault,
        seed: 3,
        prompts: 4,
    };
    config.artifact_dir = dir.join("out");
    let path = dir.join("config.json");
    config.save(&path).unwrap();
    path
}

#[test]
fn full_chain_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    for sub in ["gen", "calibrate", "compile", "share", "run", "report"] {
        let output = bin().arg(sub).arg(&config).output().unwrap();
        assert!(
            output.status.success(),
            "{sub} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let out = dir.path().join("out");
    assert!(out.join("masks.csam").exists());
    assert!(out.join("report.json").exists());
    assert!(out.join("csv/cells.csv").exists());
}

#[test]
fn init_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fresh.json");
    let output = bin().arg("init").arg(&path).output().unwrap();
    assert!(output.status.success());
    let config = PipelineConfig::load(&path).unwrap();
    assert_eq!(config, PipelineConfig::default());
}

#[test]
fn flag_overrides_reach_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let override_dir = dir.path().join("elsewhere");
    let output = bin()
        .args(["gen"])
        .arg(&config)
        .arg("--artifact-dir")
        .arg(&override_dir)
        .args(["--prompts", "5"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(override_dir.join("manifest.json").exists());
    let text = String::from_utf8_lossy(&output.stdout);
    // 5 prompts x 2*2*2 grid cells.
    assert!(text.contains("40 cells"), "stdout was: {text}");
}

#[test]
fn errors_exit_nonzero() {
    // Missing config file.
    let output = bin()
        .args(["gen", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert!(!output.status.success());

    // Invalid override (rho outside (0, 1]).
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let output = bin()
        .arg("calibrate")
        .arg(&config)
        .args(["--rho", "1.5"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error:"), "stderr was: {stderr}");

    // Run before calibrate: the dictionary is missing.
    let output = bin().arg("run").arg(&config).output().unwrap();
    assert!(!output.status.success());
}
