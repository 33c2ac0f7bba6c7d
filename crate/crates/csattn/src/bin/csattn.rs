//! Thin command-line front end over the pipeline functions.
//!
//! Each subcommand takes the config file path as its positional argument
//! plus `--key value` overrides for the common scalar fields. Exit code
//! is 0 on success and 1 on any error.

use clap::{Args, Parser, Subcommand};
use csattn::pipeline::{
    cmd_calibrate, cmd_compile, cmd_gen, cmd_report, cmd_run, cmd_share, PipelineConfig,
    WorkloadConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "csattn",
    about = "Calibrate, compress, and verify block-sparse attention masks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (JSON).
    config: PathBuf,
    /// Cross-prompt agreement threshold (rho).
    #[arg(long)]
    rho: Option<f64>,
    /// Spatial-similarity threshold (gamma).
    #[arg(long)]
    gamma: Option<f64>,
    /// Skipped-set IoU threshold for timestep sharing (tau).
    #[arg(long)]
    tau: Option<f64>,
    /// Anchor rows per frame.
    #[arg(long)]
    anchors: Option<usize>,
    /// Prompts used for mask calibration.
    #[arg(long)]
    mask_prompts: Option<usize>,
    /// Prompts used for similarity scoring.
    #[arg(long)]
    similarity_prompts: Option<usize>,
    /// Prompts evaluated per cell by `run`.
    #[arg(long)]
    eval_prompts: Option<usize>,
    /// Interval-merge percentile (100 disables merging).
    #[arg(long)]
    merge_percentile: Option<f64>,
    /// Workload seed (synthetic sources).
    #[arg(long)]
    seed: Option<u64>,
    /// Workload prompt count (synthetic sources).
    #[arg(long)]
    prompts: Option<usize>,
    /// Artifact directory.
    #[arg(long)]
    artifact_dir: Option<PathBuf>,
    /// Run against the timestep-shared dictionary.
    #[arg(long)]
    run_on_shared: bool,
}

impl Common {
    fn load(&self) -> csattn::Result<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        if let Some(v) = self.rho {
            config.agreement_threshold = v;
        }
        if let Some(v) = self.gamma {
            config.similarity_threshold = v;
        }
        if let Some(v) = self.tau {
            config.iou_threshold = v;
        }
        if let Some(v) = self.anchors {
            config.anchor_count = v;
        }
        if let Some(v) = self.mask_prompts {
            config.mask_prompts = v;
        }
        if let Some(v) = self.similarity_prompts {
            config.similarity_prompts = v;
        }
        if let Some(v) = self.eval_prompts {
            config.eval_prompts = v;
        }
        if let Some(v) = self.merge_percentile {
            config.merge_percentile = v;
        }
        if let Some(dir) = &self.artifact_dir {
            config.artifact_dir = dir.clone();
        }
        if self.run_on_shared {
            config.run_on_shared = true;
        }
        if let WorkloadConfig::Synthetic { seed, prompts, .. } = &mut config.workload {
            if let Some(v) = self.seed {
                *seed = v;
            }
            if let Some(v) = self.prompts {
                *prompts = v;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a default configuration file.
    Init {
        /// Destination path.
        path: PathBuf,
    },
    /// Resolve the workload and write the manifest.
    Gen(Common),
    /// Calibrate the mask dictionary and similarity scores.
    Calibrate(Common),
    /// Compile masks into skip lists.
    Compile(Common),
    /// Share masks across similar timesteps.
    Share(Common),
    /// Execute the sparse reference paths and write the report.
    Run(Common),
    /// Render the report as text and CSV tables.
    Report(Common),
}

fn run() -> csattn::Result<()> {
    match Cli::parse().command {
        Command::Init { path } => {
            let config = PipelineConfig::default();
            config.save(&path)?;
            println!("wrote default config to {}", path.display());
        }
        Command::Gen(common) => {
            let config = common.load()?;
            let manifest = cmd_gen(&config)?;
            println!(
                "manifest: {} cells ({} prompts x {} grid cells) -> {}",
                manifest.total_cells,
                manifest.prompts,
                manifest.grid.cell_count(),
                config.paths().manifest().display()
            );
        }
        Command::Calibrate(common) => {
            let config = common.load()?;
            let summary = cmd_calibrate(&config)?;
            println!(
                "calibrated {} mask cells, {} repetitive cells (bimodal fraction {:.3})",
                summary.mask_cells, summary.repetitive_cells, summary.bimodal_fraction
            );
            println!("dictionary -> {}", config.paths().dictionary().display());
        }
        Command::Compile(common) => {
            let config = common.load()?;
            let summary = cmd_compile(&config)?;
            println!(
                "skip lists: full {} B, trimmed {} B{}{}",
                summary.footprint_full,
                summary.footprint_trimmed,
                summary
                    .footprint_merged
                    .map(|m| format!(", merged {m} B"))
                    .unwrap_or_default(),
                summary
                    .footprint_flat
                    .map(|m| format!(", flat {m} B"))
                    .unwrap_or_default()
            );
        }
        Command::Share(common) => {
            let config = common.load()?;
            let summary = cmd_share(&config)?;
            let clusters: usize = summary.assignments.iter().map(|a| a.clusters.len()).sum();
            println!(
                "sharing at tau={}: {} clusters, footprint {} B -> {} B",
                summary.iou_threshold,
                clusters,
                summary.footprint_per_timestep,
                summary.footprint_deduplicated
            );
        }
        Command::Run(common) => {
            let config = common.load()?;
            let report = cmd_run(&config)?;
            println!(
                "overall sparsity {:.6}, relative error mean {:.3e} max {:.3e}",
                report.sparsity.overall_sparsity,
                report.sparsity.mean_relative_error,
                report.sparsity.max_relative_error
            );
            println!("report -> {}", config.paths().report().display());
        }
        Command::Report(common) => {
            let config = common.load()?;
            let output = cmd_report(&config)?;
            print!("{}", output.text);
            for file in output.csv_files {
                println!("csv -> {}", file.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
