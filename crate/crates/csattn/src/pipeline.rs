//! End-to-end orchestration: configuration, the pipeline commands, and
//! report emission.
//!
//! Command order is gen -> calibrate -> compile -> share -> run ->
//! report. Every command reads its inputs from the artifact directory
//! and writes its outputs atomically, so identical configurations always
//! reproduce identical artifact bytes.

use crate::calibration::{
    aggregate_masks, keep_rate_histogram, threshold_mask, CellKey, DictEntry, EpsilonSchedule,
    GridDims, MaskDictionary,
};
use crate::error::{Error, Result};
use crate::executor::{evaluate, SparsityReport};
use crate::formats::{
    self, read_dictionary, validate_dump, write_dictionary, write_flat, write_skiplists,
    DumpSource, SkipEntry,
};
use crate::layout::VideoLayout;
use crate::math::post_softmax_map;
use crate::repetition::{detect_repetitive, spatial_similarity, SimilarityScore};
use crate::sharing::{share_dictionary, ClusterAssignment};
use crate::skiplist::{
    compile, footprint_2d, merge_intervals, trim_layer, MergeOutcome, SkipList2D,
};
use crate::workloads::{HeadSource, ProfileKind, WorkloadPreset, WorkloadSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Histogram bin count for keep-rate summaries.
const KEEP_RATE_BINS: usize = 20;

/// Where the attention inputs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum WorkloadConfig {
    /// Generated on the fly from a preset.
    Synthetic {
        preset: WorkloadPreset,
        seed: u64,
        prompts: usize,
    },
    /// A fully spelled-out synthetic spec (per-head profiles and seeds).
    Explicit { spec: WorkloadSpec },
    /// Read from an attention dump file.
    Dump { path: PathBuf },
}

impl WorkloadConfig {
    fn prompt_count(&self) -> Option<usize> {
        match self {
            WorkloadConfig::Synthetic { prompts, .. } => Some(*prompts),
            WorkloadConfig::Explicit { spec } => Some(spec.prompt_seeds.len()),
            WorkloadConfig::Dump { .. } => None,
        }
    }
}

/// Full pipeline configuration. The JSON file mirrors this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub layout: VideoLayout,
    pub grid: GridDims,
    pub head_dim: usize,
    pub schedule: EpsilonSchedule,
    /// Cross-prompt agreement threshold (rho).
    pub agreement_threshold: f64,
    /// Spatial-similarity threshold (gamma).
    pub similarity_threshold: f64,
    /// Anchor rows per frame (k).
    pub anchor_count: usize,
    /// Prompts used for mask calibration.
    pub mask_prompts: usize,
    /// Prompts used for similarity scoring.
    pub similarity_prompts: usize,
    /// Skipped-set IoU threshold for timestep sharing (tau).
    pub iou_threshold: f64,
    /// Interval-merge percentile; 100 disables merging.
    pub merge_percentile: f64,
    /// Also emit the flat (1D) skip-list file.
    pub emit_flat: bool,
    /// Prompts evaluated per cell by the run command.
    pub eval_prompts: usize,
    /// Run against the timestep-shared dictionary instead of the
    /// calibrated one.
    pub run_on_shared: bool,
    pub workload: WorkloadConfig,
    pub artifact_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            layout: VideoLayout::desk_default(),
            grid: GridDims {
                timesteps: 4,
                layers: 4,
                heads: 4,
            },
            head_dim: 16,
            schedule: EpsilonSchedule::new(
                crate::calibration::BaseLevel::Fixed { base: 0.95 },
                0.99,
                8.0,
                4,
            )
            .unwrap(),
            agreement_threshold: 0.5,
            similarity_threshold: 0.87,
            anchor_count: 5,
            mask_prompts: 64,
            similarity_prompts: 8,
            iou_threshold: 0.97,
            merge_percentile: 100.0,
            emit_flat: true,
            eval_prompts: 2,
            run_on_shared: false,
            workload: WorkloadConfig::Synthetic {
                preset: WorkloadPreset::DeskDefault,
                seed: 7,
                prompts: 64,
            },
            artifact_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let config: PipelineConfig = serde_json::from_slice(&bytes)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        formats::write_atomic(path, &bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported config schema version {}",
                self.schema_version
            )));
        }
        self.schedule.validate()?;
        if self.schedule.timesteps != self.grid.timesteps {
            return Err(Error::config(format!(
                "schedule covers {} timesteps, grid has {}",
                self.schedule.timesteps, self.grid.timesteps
            )));
        }
        if !(self.agreement_threshold > 0.0 && self.agreement_threshold <= 1.0) {
            return Err(Error::config("agreement threshold must be in (0, 1]"));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::config("similarity threshold must be in (0, 1]"));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::config("IoU threshold must be in (0, 1]"));
        }
        if !(self.merge_percentile > 0.0 && self.merge_percentile <= 100.0) {
            return Err(Error::config("merge percentile must be in (0, 100]"));
        }
        if self.anchor_count == 0 || self.anchor_count > self.layout.rows_per_frame {
            return Err(Error::config(format!(
                "anchor count must be in 1..={}",
                self.layout.rows_per_frame
            )));
        }
        if self.mask_prompts == 0 || self.similarity_prompts == 0 || self.eval_prompts == 0 {
            return Err(Error::config("prompt counts must be at least 1"));
        }
        if self.head_dim == 0 {
            return Err(Error::config("head dimension must be at least 1"));
        }
        if let Some(prompts) = self.workload.prompt_count() {
            let needed = self.mask_prompts.max(self.similarity_prompts);
            if prompts < needed {
                return Err(Error::config(format!(
                    "workload provides {prompts} prompts, calibration needs {needed}"
                )));
            }
        }
        if let WorkloadConfig::Explicit { spec } = &self.workload {
            spec.validate()?;
            if spec.layout != self.layout
                || spec.grid != self.grid
                || spec.head_dim != self.head_dim
            {
                return Err(Error::config(
                    "explicit workload spec does not match the configured geometry",
                ));
            }
        }
        Ok(())
    }

    /// Resolves the configured workload into a head source.
    pub fn resolve_source(&self) -> Result<Source> {
        match &self.workload {
            WorkloadConfig::Synthetic {
                preset,
                seed,
                prompts,
            } => Ok(Source::Synthetic(preset.build(
                self.layout,
                self.grid,
                self.head_dim,
                *seed,
                *prompts,
            )?)),
            WorkloadConfig::Explicit { spec } => Ok(Source::Synthetic(spec.clone())),
            WorkloadConfig::Dump { path } => {
                let source = DumpSource::open(path)?;
                if source.header.layout != self.layout
                    || source.header.grid != self.grid
                    || source.header.head_dim != self.head_dim
                {
                    return Err(Error::config(
                        "workload dump dimensions do not match the configuration",
                    ));
                }
                let needed = self.mask_prompts.max(self.similarity_prompts);
                if source.header.prompts < needed {
                    return Err(Error::config(format!(
                        "workload dump provides {} prompts, calibration needs {needed}",
                        source.header.prompts
                    )));
                }
                Ok(Source::Dump(source))
            }
        }
    }

    pub fn paths(&self) -> ArtifactPaths {
        ArtifactPaths {
            dir: self.artifact_dir.clone(),
        }
    }
}

/// Resolved workload source.
pub enum Source {
    Synthetic(WorkloadSpec),
    Dump(DumpSource),
}

impl Source {
    /// Generator kind per (layer, head) where known.
    fn profile_kind(&self, layer: usize, head: usize) -> Option<ProfileKind> {
        match self {
            Source::Synthetic(spec) => Some(spec.profile(layer, head).kind),
            Source::Dump(_) => None,
        }
    }
}

impl HeadSource for Source {
    fn layout(&self) -> VideoLayout {
        match self {
            Source::Synthetic(s) => s.layout(),
            Source::Dump(d) => d.layout(),
        }
    }

    fn grid(&self) -> GridDims {
        match self {
            Source::Synthetic(s) => s.grid(),
            Source::Dump(d) => d.grid(),
        }
    }

    fn prompt_count(&self) -> usize {
        match self {
            Source::Synthetic(s) => s.prompt_count(),
            Source::Dump(d) => d.prompt_count(),
        }
    }

    fn head_input(&self, prompt: usize, key: CellKey) -> Result<crate::math::AttentionHeadInput> {
        match self {
            Source::Synthetic(s) => s.head_input(prompt, key),
            Source::Dump(d) => d.head_input(prompt, key),
        }
    }
}

/// Fixed file names inside the artifact directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub dir: PathBuf,
}

impl ArtifactPaths {
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn dictionary(&self) -> PathBuf {
        self.dir.join("masks.csam")
    }

    pub fn calibration_summary(&self) -> PathBuf {
        self.dir.join("calibration.json")
    }

    pub fn skiplists(&self) -> PathBuf {
        self.dir.join("skiplists.cssl")
    }

    pub fn flat(&self) -> PathBuf {
        self.dir.join("skiplists.csfl")
    }

    pub fn compile_summary(&self) -> PathBuf {
        self.dir.join("compile.json")
    }

    pub fn shared_dictionary(&self) -> PathBuf {
        self.dir.join("shared.csam")
    }

    pub fn sharing_summary(&self) -> PathBuf {
        self.dir.join("sharing.json")
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn csv_dir(&self) -> PathBuf {
        self.dir.join("csv")
    }

    fn ensure_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        Ok(())
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    formats::write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub prompt: usize,
    pub timestep: usize,
    pub layer: usize,
    pub head: usize,
    pub kind: String,
}

/// Workload manifest: the resolved source plus the full cell listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub source: String,
    pub layout: VideoLayout,
    pub grid: GridDims,
    pub head_dim: usize,
    pub prompts: usize,
    pub total_cells: usize,
    pub cells: Vec<ManifestCell>,
}

/// Resolves the workload (validating external dumps) and writes the
/// manifest.
pub fn cmd_gen(config: &PipelineConfig) -> Result<Manifest> {
    config.validate()?;
    let paths = config.paths();
    paths.ensure_dir()?;
    if let WorkloadConfig::Dump { path } = &config.workload {
        validate_dump(path)?;
    }
    let source = config.resolve_source()?;
    let grid = source.grid();
    let prompts = source.prompt_count();
    let mut cells = Vec::with_capacity(prompts * grid.cell_count());
    for prompt in 0..prompts {
        for key in grid.keys() {
            let kind = match source.profile_kind(key.layer, key.head) {
                Some(ProfileKind::BlockSparse) => "block-sparse",
                Some(ProfileKind::Repetitive) => "repetitive",
                Some(ProfileKind::Mixed) => "mixed",
                Some(ProfileKind::DenseNoise) => "dense-noise",
                None => "external",
            };
            cells.push(ManifestCell {
                prompt,
                timestep: key.timestep,
                layer: key.layer,
                head: key.head,
                kind: kind.to_string(),
            });
        }
    }
    let manifest = Manifest {
        schema_version: CONFIG_SCHEMA_VERSION,
        source: match &config.workload {
            WorkloadConfig::Synthetic { .. } => "synthetic".to_string(),
            WorkloadConfig::Explicit { .. } => "synthetic-explicit".to_string(),
            WorkloadConfig::Dump { path } => format!("dump:{}", path.display()),
        },
        layout: config.layout,
        grid,
        head_dim: config.head_dim,
        prompts,
        total_cells: cells.len(),
        cells,
    };
    write_json(&manifest, &paths.manifest())?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

/// One similarity row of the calibration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub timestep: usize,
    pub layer: usize,
    pub head: usize,
    pub score: f64,
    pub std_dev: f64,
    pub per_prompt: Vec<f64>,
    pub repetitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub bins: usize,
    pub counts: Vec<usize>,
}

/// Calibration artifacts beyond the dictionary itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub schema_version: u32,
    pub epsilon_by_timestep: Vec<f64>,
    pub mask_cells: usize,
    pub repetitive_cells: usize,
    /// Keep-rate histogram over the aggregated masks of mask cells.
    pub histogram: HistogramSummary,
    /// Fraction of those blocks with mean keep rate <= 0.1 or >= 0.9.
    pub bimodal_fraction: f64,
    pub similarity: Vec<SimilarityRow>,
}

/// Runs per-prompt selection, aggregation, thresholding, and repetition
/// detection for every grid cell; writes the dictionary and summary.
pub fn cmd_calibrate(config: &PipelineConfig) -> Result<CalibrationSummary> {
    config.validate()?;
    let paths = config.paths();
    paths.ensure_dir()?;
    let source = config.resolve_source()?;
    let layout = config.layout;
    let n = layout.seq_len();

    let mut entries = BTreeMap::new();
    let mut similarity_rows = Vec::new();
    let mut histogram = vec![0usize; KEEP_RATE_BINS];
    let mut mask_cells = 0usize;
    let mut repetitive_cells = 0usize;
    let mut extreme_blocks = 0usize;
    let mut counted_blocks = 0usize;

    let probe_prompts = config.mask_prompts.max(config.similarity_prompts);
    for key in config.grid.keys() {
        let epsilon = config.schedule.epsilon_at(key.timestep, n)?;
        let mut masks = Vec::with_capacity(config.mask_prompts);
        let mut sims = Vec::with_capacity(config.similarity_prompts);
        for prompt in 0..probe_prompts {
            let input = source.head_input(prompt, key)?;
            let need_mask = prompt < config.mask_prompts;
            if prompt < config.similarity_prompts {
                // Similarity needs the attention map itself; reuse it
                // for the mask so the map is built once.
                let p = post_softmax_map(&input)?;
                sims.push(spatial_similarity(&p, &layout, config.anchor_count)?);
                if need_mask {
                    masks.push(crate::calibration::per_prompt_mask(&p, &layout, epsilon)?);
                }
            } else if need_mask {
                // Mask-only prompts accumulate block energies row by row
                // without materializing the map.
                let energy = crate::calibration::streaming_block_energy(&input, &layout)?;
                masks.push(crate::calibration::mask_from_energy(&energy, epsilon)?);
            }
        }
        let score = SimilarityScore::from_prompts(key, sims)?;
        let repetitive = detect_repetitive(score.score, config.similarity_threshold);
        similarity_rows.push(SimilarityRow {
            timestep: key.timestep,
            layer: key.layer,
            head: key.head,
            score: score.score,
            std_dev: score.std_dev,
            per_prompt: score.per_prompt,
            repetitive,
        });
        if repetitive {
            repetitive_cells += 1;
            entries.insert(
                key,
                DictEntry::Repetitive {
                    anchors: config.anchor_count as u16,
                },
            );
            continue;
        }
        let agg = aggregate_masks(&masks)?;
        for (bin, count) in keep_rate_histogram(&agg, KEEP_RATE_BINS)?
            .iter()
            .enumerate()
        {
            histogram[bin] += count;
        }
        extreme_blocks += agg
            .means()
            .iter()
            .filter(|&&m| m <= 0.1 || m >= 0.9)
            .count();
        counted_blocks += agg.means().len();
        mask_cells += 1;
        entries.insert(
            key,
            DictEntry::Mask(threshold_mask(&agg, config.agreement_threshold)?),
        );
    }

    let dictionary = MaskDictionary::from_entries(layout, config.grid, entries)?;
    write_dictionary(&dictionary, &paths.dictionary())?;

    let epsilon_by_timestep = (0..config.grid.timesteps)
        .map(|t| config.schedule.epsilon_at(t, n))
        .collect::<Result<Vec<_>>>()?;
    let summary = CalibrationSummary {
        schema_version: CONFIG_SCHEMA_VERSION,
        epsilon_by_timestep,
        mask_cells,
        repetitive_cells,
        histogram: HistogramSummary {
            bins: KEEP_RATE_BINS,
            counts: histogram,
        },
        bimodal_fraction: if counted_blocks == 0 {
            0.0
        } else {
            extreme_blocks as f64 / counted_blocks as f64
        },
        similarity: similarity_rows,
    };
    write_json(&summary, &paths.calibration_summary())?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// compile
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMergeRow {
    pub layer: usize,
    pub target_width: usize,
    pub extra_blocks: u64,
}

/// Skip-list compilation results and footprints in bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileSummary {
    pub schema_version: u32,
    /// Full allocation at the theoretical maximum width.
    pub footprint_full: u64,
    /// After per-layer trimming.
    pub footprint_trimmed: u64,
    /// After interval merging (absent when the percentile is 100).
    pub footprint_merged: Option<u64>,
    pub merge_percentile: f64,
    pub merges: Vec<LayerMergeRow>,
    /// Flat representation (absent unless emitted).
    pub footprint_flat: Option<u64>,
}

/// Compiles the dictionary into skip lists: per-layer trimming, optional
/// interval merging, optional flat emission.
pub fn cmd_compile(config: &PipelineConfig) -> Result<CompileSummary> {
    config.validate()?;
    let paths = config.paths();
    paths.ensure_dir()?;
    let dictionary = read_dictionary(&paths.dictionary(), &config.layout)?;

    let mut entries: Vec<SkipEntry> = Vec::with_capacity(dictionary.grid.cell_count());
    for (_, entry) in dictionary.entries() {
        entries.push(match entry {
            DictEntry::Mask(mask) => SkipEntry::List(compile(mask)?),
            DictEntry::Repetitive { anchors } => SkipEntry::Repetitive { anchors: *anchors },
        });
    }
    let grid = dictionary.grid;
    let footprint_full = skiplist_footprint(&entries);

    // Trim per layer across all (t, h) entries of that layer.
    for layer in 0..grid.layers {
        let mut lists = take_layer_lists(&mut entries, grid, layer);
        trim_layer(&mut lists);
        restore_layer_lists(&mut entries, grid, layer, lists);
    }
    let footprint_trimmed = skiplist_footprint(&entries);

    let mut merges = Vec::new();
    let mut footprint_merged = None;
    if config.merge_percentile < 100.0 {
        for layer in 0..grid.layers {
            let mut lists = take_layer_lists(&mut entries, grid, layer);
            if lists.is_empty() {
                continue;
            }
            let MergeOutcome {
                target_width,
                extra_blocks,
            } = merge_intervals(&mut lists, config.merge_percentile)?;
            merges.push(LayerMergeRow {
                layer,
                target_width,
                extra_blocks,
            });
            restore_layer_lists(&mut entries, grid, layer, lists);
        }
        footprint_merged = Some(skiplist_footprint(&entries));
    }

    write_skiplists(&entries, grid, &config.layout, &paths.skiplists())?;
    let mut footprint_flat = None;
    if config.emit_flat {
        write_flat(&entries, grid, &config.layout, &paths.flat())?;
        let flat = formats::read_flat(&paths.flat(), &config.layout)?;
        footprint_flat = Some(flat.flat.footprint_bytes());
    }

    let summary = CompileSummary {
        schema_version: CONFIG_SCHEMA_VERSION,
        footprint_full,
        footprint_trimmed,
        footprint_merged,
        merge_percentile: config.merge_percentile,
        merges,
        footprint_flat,
    };
    write_json(&summary, &paths.compile_summary())?;
    Ok(summary)
}

fn skiplist_footprint(entries: &[SkipEntry]) -> u64 {
    entries
        .iter()
        .map(|e| match e {
            SkipEntry::List(l) => l.footprint_bytes(),
            SkipEntry::Repetitive { .. } => 0,
        })
        .sum()
}

/// Extracts the skip lists of one layer (all timesteps and heads), in
/// grid order.
fn take_layer_lists(entries: &mut [SkipEntry], grid: GridDims, layer: usize) -> Vec<SkipList2D> {
    let mut lists = Vec::new();
    for key in grid.keys() {
        if key.layer != layer {
            continue;
        }
        if let SkipEntry::List(list) = &entries[grid.index_of(key)] {
            lists.push(list.clone());
        }
    }
    lists
}

fn restore_layer_lists(
    entries: &mut [SkipEntry],
    grid: GridDims,
    layer: usize,
    lists: Vec<SkipList2D>,
) {
    let mut it = lists.into_iter();
    for key in grid.keys() {
        if key.layer != layer {
            continue;
        }
        let idx = grid.index_of(key);
        if matches!(entries[idx], SkipEntry::List(_)) {
            entries[idx] = SkipEntry::List(it.next().unwrap());
        }
    }
}

// ---------------------------------------------------------------------------
// share
// ---------------------------------------------------------------------------

/// Timestep-sharing results: cluster assignments, the averaged IoU
/// matrix, and the skip-list footprint before/after deduplication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingSummary {
    pub schema_version: u32,
    pub iou_threshold: f64,
    pub assignments: Vec<ClusterAssignment>,
    pub iou_matrix: Vec<Vec<f64>>,
    /// Trimmed 2D footprint storing one skip list per timestep.
    pub footprint_per_timestep: u64,
    /// Trimmed 2D footprint storing one skip list per cluster.
    pub footprint_deduplicated: u64,
}

/// Clusters timesteps per (layer, head) and writes the shared dictionary.
pub fn cmd_share(config: &PipelineConfig) -> Result<SharingSummary> {
    config.validate()?;
    let paths = config.paths();
    paths.ensure_dir()?;
    let dictionary = read_dictionary(&paths.dictionary(), &config.layout)?;
    let outcome = share_dictionary(&dictionary, config.iou_threshold)?;
    write_dictionary(&outcome.dictionary, &paths.shared_dictionary())?;

    let footprint_per_timestep = trimmed_footprint_per_layer(&dictionary, None)?;
    let footprint_deduplicated =
        trimmed_footprint_per_layer(&outcome.dictionary, Some(&outcome.assignments))?;

    let summary = SharingSummary {
        schema_version: CONFIG_SCHEMA_VERSION,
        iou_threshold: config.iou_threshold,
        assignments: outcome.assignments,
        iou_matrix: outcome.iou_matrix,
        footprint_per_timestep,
        footprint_deduplicated,
    };
    write_json(&summary, &paths.sharing_summary())?;
    Ok(summary)
}

/// Per-layer-trimmed 2D footprint. With assignments, each cluster's mask
/// is stored once instead of once per member timestep.
fn trimmed_footprint_per_layer(
    dict: &MaskDictionary,
    assignments: Option<&[ClusterAssignment]>,
) -> Result<u64> {
    let grid = dict.grid;
    let mut total = 0u64;
    for layer in 0..grid.layers {
        let mut lists: Vec<SkipList2D> = Vec::new();
        match assignments {
            None => {
                for key in grid.keys() {
                    if key.layer != layer {
                        continue;
                    }
                    if let DictEntry::Mask(mask) = dict.get(key)? {
                        lists.push(compile(mask)?);
                    }
                }
            }
            Some(rows) => {
                for row in rows.iter().filter(|r| r.layer == layer) {
                    for cluster in &row.clusters {
                        // Members share one mask; compile the first.
                        let t = cluster[0];
                        let key = CellKey {
                            timestep: t,
                            layer: row.layer,
                            head: row.head,
                        };
                        if let DictEntry::Mask(mask) = dict.get(key)? {
                            lists.push(compile(mask)?);
                        }
                    }
                }
            }
        }
        if lists.is_empty() {
            continue;
        }
        trim_layer(&mut lists);
        total += footprint_2d(&lists);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// The full run report persisted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub layout: VideoLayout,
    pub grid: GridDims,
    pub used_shared_dictionary: bool,
    #[serde(flatten)]
    pub sparsity: SparsityReport,
    /// Carried over from calibration when available.
    pub histogram: Option<HistogramSummary>,
    /// Carried over from compilation when available.
    pub footprints: Option<CompileSummary>,
    /// Cluster sizes across (layer, head), from sharing when available.
    pub cluster_sizes: Option<Vec<usize>>,
}

/// Executes the reference sparse and anchor paths over every cell and
/// writes the report.
pub fn cmd_run(config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let paths = config.paths();
    paths.ensure_dir()?;
    let dict_path = if config.run_on_shared {
        paths.shared_dictionary()
    } else {
        paths.dictionary()
    };
    let dictionary = read_dictionary(&dict_path, &config.layout)?;
    if dictionary.grid != config.grid {
        return Err(Error::config(format!(
            "dictionary grid {:?} does not match configured grid {:?}",
            dictionary.grid, config.grid
        )));
    }
    let source = config.resolve_source()?;
    let sparsity = evaluate(&dictionary, &source, config.eval_prompts)?;

    let histogram = read_json::<CalibrationSummary>(&paths.calibration_summary())
        .ok()
        .map(|s| s.histogram);
    let footprints = read_json::<CompileSummary>(&paths.compile_summary()).ok();
    let cluster_sizes = read_json::<SharingSummary>(&paths.sharing_summary())
        .ok()
        .map(|s| {
            s.assignments
                .iter()
                .flat_map(|a| a.clusters.iter().map(Vec::len))
                .collect()
        });

    let report = RunReport {
        schema_version: CONFIG_SCHEMA_VERSION,
        layout: config.layout,
        grid: config.grid,
        used_shared_dictionary: config.run_on_shared,
        sparsity,
        histogram,
        footprints,
        cluster_sizes,
    };
    write_json(&report, &paths.report())?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Rendered summary plus the CSV tables written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub text: String,
    pub csv_files: Vec<PathBuf>,
}

/// Formats the run report as text tables and CSV files.
pub fn cmd_report(config: &PipelineConfig) -> Result<ReportOutput> {
    let paths = config.paths();
    let report: RunReport = read_json(&paths.report())?;
    if report.sparsity.cells.is_empty() {
        return Err(Error::corrupt("report holds no per-cell entries"));
    }
    let csv_dir = paths.csv_dir();
    std::fs::create_dir_all(&csv_dir)?;
    let mut csv_files = Vec::new();
    let mut text = String::new();

    use std::fmt::Write as _;
    writeln!(
        text,
        "overall sparsity: {:.6}",
        report.sparsity.overall_sparsity
    )
    .unwrap();
    writeln!(
        text,
        "relative error: mean {:.3e}, max {:.3e} over {} prompt(s)",
        report.sparsity.mean_relative_error,
        report.sparsity.max_relative_error,
        report.sparsity.eval_prompts
    )
    .unwrap();

    // Per-cell table.
    let mut cells_csv = String::from(
        "timestep,layer,head,kind,sparsity,skipped_pairs,mean_relative_error,max_relative_error\n",
    );
    for c in &report.sparsity.cells {
        writeln!(
            cells_csv,
            "{},{},{},{},{},{},{},{}",
            c.timestep,
            c.layer,
            c.head,
            c.kind,
            c.sparsity,
            c.skipped_pairs,
            c.mean_relative_error,
            c.max_relative_error
        )
        .unwrap();
    }
    let cells_path = csv_dir.join("cells.csv");
    formats::write_atomic(&cells_path, cells_csv.as_bytes())?;
    csv_files.push(cells_path);

    // Sparsity grouped by timestep and by layer.
    for (name, label, by_timestep) in [
        ("sparsity_by_timestep.csv", "timestep", true),
        ("sparsity_by_layer.csv", "layer", false),
    ] {
        let extent = if by_timestep {
            report.grid.timesteps
        } else {
            report.grid.layers
        };
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); extent];
        for c in &report.sparsity.cells {
            let idx = if by_timestep { c.timestep } else { c.layer };
            sums[idx].0 += c.sparsity;
            sums[idx].1 += c.mean_relative_error;
            sums[idx].2 += 1;
        }
        let mut csv = format!("{label},mean_sparsity,mean_relative_error\n");
        writeln!(text, "mean sparsity by {label}:").unwrap();
        for (idx, (sp, err, n)) in sums.iter().enumerate() {
            let n = (*n).max(1) as f64;
            writeln!(csv, "{},{},{}", idx, sp / n, err / n).unwrap();
            writeln!(text, "  {label} {idx}: {:.6}", sp / n).unwrap();
        }
        let path = csv_dir.join(name);
        formats::write_atomic(&path, csv.as_bytes())?;
        csv_files.push(path);
    }

    // Keep-rate histogram, when calibration ran.
    if let Some(h) = &report.histogram {
        let mut csv = String::from("bin_low,bin_high,count\n");
        let width = 1.0 / h.bins as f64;
        for (i, count) in h.counts.iter().enumerate() {
            writeln!(
                csv,
                "{},{},{}",
                i as f64 * width,
                (i + 1) as f64 * width,
                count
            )
            .unwrap();
        }
        let path = csv_dir.join("keep_rate_histogram.csv");
        formats::write_atomic(&path, csv.as_bytes())?;
        csv_files.push(path);
        let total: usize = h.counts.iter().sum();
        writeln!(text, "keep-rate histogram over {total} blocks").unwrap();
    }

    // Cluster sizes, when sharing ran.
    if let Some(sizes) = &report.cluster_sizes {
        let mut by_size: BTreeMap<usize, usize> = BTreeMap::new();
        for &s in sizes {
            *by_size.entry(s).or_insert(0) += 1;
        }
        let mut csv = String::from("cluster_size,count\n");
        for (size, count) in &by_size {
            writeln!(csv, "{size},{count}").unwrap();
        }
        let path = csv_dir.join("cluster_sizes.csv");
        formats::write_atomic(&path, csv.as_bytes())?;
        csv_files.push(path);
        writeln!(
            text,
            "timestep clusters: {} total, sizes {:?}",
            sizes.len(),
            by_size
        )
        .unwrap();
    }

    // Footprints, when compilation ran.
    if let Some(f) = &report.footprints {
        writeln!(
            text,
            "skip-list footprint: full {} B, trimmed {} B{}{}",
            f.footprint_full,
            f.footprint_trimmed,
            f.footprint_merged
                .map(|m| format!(", merged {m} B"))
                .unwrap_or_default(),
            f.footprint_flat
                .map(|m| format!(", flat {m} B"))
                .unwrap_or_default()
        )
        .unwrap();
    }

    Ok(ReportOutput { text, csv_files })
}
