//! Runs the whole pipeline — gen, calibrate, compile, share, run,
//! report — against a small synthetic suite in a temporary directory.
//!
//! Run with: cargo run --example full_pipeline

use csattn::calibration::{BaseLevel, EpsilonSchedule, GridDims};
use csattn::pipeline::{
    cmd_calibrate, cmd_compile, cmd_gen, cmd_report, cmd_run, cmd_share, PipelineConfig,
    WorkloadConfig,
};
use csattn::workloads::WorkloadPreset;

fn main() -> csattn::Result<()> {
    let dir = std::env::temp_dir().join("csattn-full-pipeline");

    let mut config = PipelineConfig::default();
    config.grid = GridDims {
        timesteps: 4,
        layers: 2,
        heads: 2,
    };
    config.schedule = EpsilonSchedule::new(BaseLevel::Fixed { base: 0.95 }, 0.99, 8.0, 4)?;
    config.mask_prompts = 8;
    config.similarity_prompts = 4;
    config.eval_prompts = 2;
    config.merge_percentile = 90.0;
    config.workload = WorkloadConfig::Synthetic {
        preset: WorkloadPreset::DeskDefault,
        seed: 21,
        prompts: 8,
    };
    config.artifact_dir = dir.clone();

    let manifest = cmd_gen(&config)?;
    println!("gen: {} cells", manifest.total_cells);

    let calibration = cmd_calibrate(&config)?;
    println!(
        "calibrate: {} mask cells, {} repetitive cells, bimodal fraction {:.3}",
        calibration.mask_cells, calibration.repetitive_cells, calibration.bimodal_fraction
    );

    let compiled = cmd_compile(&config)?;
    println!(
        "compile: {} B full -> {} B trimmed -> {:?} B merged, flat {:?} B",
        compiled.footprint_full,
        compiled.footprint_trimmed,
        compiled.footprint_merged,
        compiled.footprint_flat
    );

    let sharing = cmd_share(&config)?;
    let clusters: usize = sharing.assignments.iter().map(|a| a.clusters.len()).sum();
    println!(
        "share: {clusters} clusters, per-timestep {} B -> deduplicated {} B",
        sharing.footprint_per_timestep, sharing.footprint_deduplicated
    );

    let report = cmd_run(&config)?;
    println!(
        "run: overall sparsity {:.4}, max relative error {:.2e}",
        report.sparsity.overall_sparsity, report.sparsity.max_relative_error
    );

    let rendered = cmd_report(&config)?;
    println!("\n{}", rendered.text);
    println!("artifacts in {}", dir.display());
    Ok(())
}
