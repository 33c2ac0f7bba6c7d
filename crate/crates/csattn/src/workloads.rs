//! Deterministic synthetic attention workloads.
//!
//! Each (layer, head) carries a profile that fixes the head's structure:
//! block-sparse heads concentrate attention inside a seeded block
//! pattern, repetitive heads make every spatial row of a frame attend
//! identically, mixed heads blend the two, and dense-noise heads are
//! unstructured. Structure derives from a structural seed shared across
//! prompts; per-prompt variation enters only through seeded noise, so a
//! given spec reproduces bit-identical tensors on every run.

use crate::calibration::{CellKey, GridDims};
use crate::error::{Error, Result};
use crate::layout::VideoLayout;
use crate::math::{AttentionHeadInput, Matrix};
use serde::{Deserialize, Serialize};

/// Stateless counter-based generator: every draw is a hash of the seed
/// and the caller-supplied coordinate words, so values are independent
/// of call order and identical across platforms.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed: mix64(seed) }
    }

    /// 64 uniform bits at the given coordinates.
    pub fn next_u64(&self, words: &[u64]) -> u64 {
        let mut h = self.seed;
        for &w in words {
            h = mix64(h ^ w.wrapping_mul(GOLDEN));
        }
        mix64(h)
    }

    /// Uniform draw in `[0, 1)` (53 mantissa bits).
    pub fn uniform(&self, words: &[u64]) -> f64 {
        (self.next_u64(words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-1, 1)`.
    pub fn symmetric(&self, words: &[u64]) -> f64 {
        self.uniform(words) * 2.0 - 1.0
    }
}

// Namespace words keep the per-component streams disjoint.
const NS_KEYS: u64 = 1;
const NS_VALUES: u64 = 2;
const NS_QUERY: u64 = 3;
const NS_JITTER: u64 = 4;
const NS_NOISE: u64 = 5;
const NS_PATTERN: u64 = 6;
const NS_TAG: u64 = 7;
const NS_PROMPT: u64 = 8;

// Query gains below are in post-softmax-scale logit units: generated
// queries are multiplied by sqrt(d) once so the default 1/sqrt(d) scale
// cancels and the constants read directly as logit magnitudes.

/// Logit gap between in-pattern and out-of-pattern blocks. e^-36 of
/// leaked mass per key keeps sparse-vs-dense error well under 1e-10.
const PATTERN_GAP: f64 = 40.0;
/// Per-query logit jitter inside kept blocks; decorrelates spatial rows
/// without destabilizing block energies.
const PATTERN_JITTER: f64 = 2.5;
/// Logit gain of repetitive heads: diffuse enough to keep block sparsity
/// low, peaked enough to be non-uniform.
const REPETITIVE_GAIN: f64 = 1.5;
/// Logit gain of dense-noise heads: concentrated enough that distinct
/// query rows decorrelate.
const DENSE_GAIN: f64 = 1.9;

/// Generator family for one attention head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    BlockSparse,
    Repetitive,
    Mixed,
    DenseNoise,
}

/// Per-(layer, head) generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadProfile {
    pub kind: ProfileKind,
    /// Seed of the head's structure, shared across prompts.
    pub structural_seed: u64,
    /// Amplitude of per-prompt query noise.
    pub sigma: f64,
    /// Kept key blocks per query block-row (block-sparse and mixed).
    pub kept_per_row: usize,
    /// Freeze the block pattern from the midpoint timestep onward, so
    /// late timesteps share masks while early ones differ.
    pub late_stable: bool,
}

impl HeadProfile {
    pub fn block_sparse(structural_seed: u64) -> Self {
        HeadProfile {
            kind: ProfileKind::BlockSparse,
            structural_seed,
            sigma: 0.5,
            kept_per_row: 4,
            late_stable: true,
        }
    }

    pub fn repetitive(structural_seed: u64) -> Self {
        HeadProfile {
            kind: ProfileKind::Repetitive,
            structural_seed,
            sigma: 0.5,
            kept_per_row: 4,
            late_stable: false,
        }
    }

    pub fn mixed(structural_seed: u64) -> Self {
        HeadProfile {
            kind: ProfileKind::Mixed,
            structural_seed,
            sigma: 0.5,
            kept_per_row: 4,
            late_stable: true,
        }
    }

    pub fn dense_noise(structural_seed: u64) -> Self {
        HeadProfile {
            kind: ProfileKind::DenseNoise,
            structural_seed,
            sigma: 1.0,
            kept_per_row: 4,
            late_stable: false,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Timestep key the pattern is drawn from: frozen at the midpoint
    /// when `late_stable` is set.
    fn pattern_timestep(&self, t: usize, timesteps: usize) -> u64 {
        if self.late_stable {
            t.min(timesteps / 2) as u64
        } else {
            t as u64
        }
    }

    /// Structure stream for one timestep key; shared by generation and
    /// `expected_pattern` so both see the same draws.
    fn structural_rng(&self, tk: u64) -> CounterRng {
        CounterRng::new(mix64(self.structural_seed ^ mix64(tk)))
    }

    /// The seeded kept-block pattern realized by block-sparse and mixed
    /// heads at timestep `t`; `None` for kinds without a pattern.
    pub fn expected_pattern(
        &self,
        layout: &VideoLayout,
        t: usize,
        timesteps: usize,
    ) -> Option<crate::calibration::BlockMask> {
        match self.kind {
            ProfileKind::BlockSparse | ProfileKind::Mixed => {
                let tk = self.pattern_timestep(t, timesteps);
                let rng = self.structural_rng(tk);
                let rows = layout.num_query_blocks();
                let cols = layout.num_key_blocks();
                let mut bits = vec![false; rows * cols];
                for r in 0..rows {
                    for c in pattern_row(&rng, tk, r, cols, self.kept_per_row) {
                        bits[r * cols + c] = true;
                    }
                }
                Some(crate::calibration::BlockMask::from_bits(*layout, bits).unwrap())
            }
            _ => None,
        }
    }
}

/// Kept key blocks of block-row `r`: the diagonal block plus seeded
/// extras, `kept_per_row` in total (capped at the column count).
fn pattern_row(
    rng: &CounterRng,
    tk: u64,
    r: usize,
    cols: usize,
    kept_per_row: usize,
) -> Vec<usize> {
    let want = kept_per_row.clamp(1, cols);
    let mut kept = vec![r % cols];
    let mut draw = 0u64;
    while kept.len() < want {
        let c = (rng.uniform(&[NS_PATTERN, tk, r as u64, draw]) * cols as f64) as usize;
        let c = c.min(cols - 1);
        if !kept.contains(&c) {
            kept.push(c);
        }
        draw += 1;
    }
    kept.sort_unstable();
    kept
}

/// Key-block tag directions. One-hot (exactly orthogonal) when the head
/// dimension allows, otherwise random sign vectors.
fn tag_entry(rng: &CounterRng, c: usize, dim: usize, head_dim: usize, n_bkv: usize) -> f64 {
    if n_bkv <= head_dim {
        if dim == c {
            1.0
        } else {
            0.0
        }
    } else {
        let bit = rng.next_u64(&[NS_TAG, c as u64, dim as u64]) & 1;
        let sign = if bit == 1 { 1.0 } else { -1.0 };
        sign / (head_dim as f64).sqrt()
    }
}

/// Generates the Q, K, V tensors for one cell of the grid.
pub fn generate_head(
    profile: &HeadProfile,
    prompt_seed: u64,
    key: CellKey,
    layout: &VideoLayout,
    head_dim: usize,
    timesteps: usize,
) -> Result<AttentionHeadInput> {
    if head_dim == 0 {
        return Err(Error::invalid("head dimension must be at least 1"));
    }
    let n = layout.seq_len();
    let n_bkv = layout.num_key_blocks();
    let tk = profile.pattern_timestep(key.timestep, timesteps);
    let structural = profile.structural_rng(tk);
    let noise = CounterRng::new(mix64(prompt_seed).wrapping_add(mix64(
        profile.structural_seed ^ (key.timestep as u64).wrapping_mul(GOLDEN),
    )));

    let sqrt_d = (head_dim as f64).sqrt();

    // Keys: tag-aligned for pattern kinds, random otherwise.
    let mut kdata = vec![0.0; n * head_dim];
    for j in 0..n {
        let block = layout.key_block_of(j);
        for dim in 0..head_dim {
            let idx = j * head_dim + dim;
            kdata[idx] = match profile.kind {
                ProfileKind::BlockSparse => tag_entry(&structural, block, dim, head_dim, n_bkv),
                ProfileKind::Mixed => {
                    tag_entry(&structural, block, dim, head_dim, n_bkv)
                        + 0.5 * structural.symmetric(&[NS_KEYS, j as u64, dim as u64])
                }
                ProfileKind::Repetitive | ProfileKind::DenseNoise => {
                    structural.symmetric(&[NS_KEYS, j as u64, dim as u64])
                }
            };
        }
    }

    let mut vdata = vec![0.0; n * head_dim];
    for (i, v) in vdata.iter_mut().enumerate() {
        *v = structural.symmetric(&[NS_VALUES, (i / head_dim) as u64, (i % head_dim) as u64]);
    }

    let mut qdata = vec![0.0; n * head_dim];
    for i in 0..n {
        let r = layout.query_block_of(i);
        let col = i % layout.row_width;
        for dim in 0..head_dim {
            let mut q = match profile.kind {
                ProfileKind::BlockSparse => {
                    pattern_query_entry(&structural, tk, r, dim, layout, head_dim, profile)
                        + PATTERN_JITTER * structural.symmetric(&[NS_JITTER, i as u64, dim as u64])
                }
                ProfileKind::Repetitive => {
                    REPETITIVE_GAIN * structural.symmetric(&[NS_QUERY, col as u64, dim as u64])
                }
                ProfileKind::DenseNoise => {
                    DENSE_GAIN * structural.symmetric(&[NS_QUERY, i as u64, dim as u64])
                }
                ProfileKind::Mixed => {
                    0.5 * (pattern_query_entry(&structural, tk, r, dim, layout, head_dim, profile)
                        + PATTERN_JITTER * structural.symmetric(&[NS_JITTER, i as u64, dim as u64]))
                        + 0.5
                            * REPETITIVE_GAIN
                            * structural.symmetric(&[NS_QUERY, col as u64, dim as u64])
                }
            };
            if profile.sigma > 0.0 {
                q += profile.sigma * noise.symmetric(&[NS_NOISE, i as u64, dim as u64]);
            }
            qdata[i * head_dim + dim] = q * sqrt_d;
        }
    }

    AttentionHeadInput::new(
        Matrix::from_vec(n, head_dim, qdata)?,
        Matrix::from_vec(n, head_dim, kdata)?,
        Matrix::from_vec(n, head_dim, vdata)?,
    )
}

/// Sum of tag directions of the kept pattern blocks in row `r`, scaled
/// so in-pattern logits sit `PATTERN_GAP` above out-of-pattern ones.
fn pattern_query_entry(
    rng: &CounterRng,
    tk: u64,
    r: usize,
    dim: usize,
    layout: &VideoLayout,
    head_dim: usize,
    profile: &HeadProfile,
) -> f64 {
    let cols = layout.num_key_blocks();
    let kept = pattern_row(rng, tk, r, cols, profile.kept_per_row);
    let mut acc = 0.0;
    for c in kept {
        acc += tag_entry(rng, c, dim, head_dim, cols);
    }
    PATTERN_GAP * acc
}

/// Anything that can produce per-cell attention inputs: synthetic suites
/// and external attention dumps.
pub trait HeadSource {
    fn layout(&self) -> VideoLayout;
    fn grid(&self) -> GridDims;
    fn prompt_count(&self) -> usize;
    fn head_input(&self, prompt: usize, key: CellKey) -> Result<AttentionHeadInput>;
}

/// A full synthetic suite: geometry, grid, prompt seeds, and one profile
/// per (layer, head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub layout: VideoLayout,
    pub grid: GridDims,
    pub head_dim: usize,
    pub prompt_seeds: Vec<u64>,
    /// Indexed `layer * grid.heads + head`.
    pub profiles: Vec<HeadProfile>,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.prompt_seeds.is_empty() {
            return Err(Error::config("workload needs at least one prompt seed"));
        }
        if self.profiles.len() != self.grid.layers * self.grid.heads {
            return Err(Error::config(format!(
                "workload has {} profiles, grid needs {}",
                self.profiles.len(),
                self.grid.layers * self.grid.heads
            )));
        }
        if self.head_dim == 0 {
            return Err(Error::config("head dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn profile(&self, layer: usize, head: usize) -> &HeadProfile {
        &self.profiles[layer * self.grid.heads + head]
    }

    /// Number of (prompt, t, l, h) cells.
    pub fn cell_count(&self) -> usize {
        self.prompt_seeds.len() * self.grid.cell_count()
    }

    /// Q, K, V for one (prompt, t, l, h) cell.
    pub fn head_input(&self, prompt: usize, key: CellKey) -> Result<AttentionHeadInput> {
        let seed = *self
            .prompt_seeds
            .get(prompt)
            .ok_or_else(|| Error::config(format!("prompt index {prompt} out of range")))?;
        generate_head(
            self.profile(key.layer, key.head),
            seed,
            key,
            &self.layout,
            self.head_dim,
            self.grid.timesteps,
        )
    }

    /// Streaming enumeration of all cells in (prompt, t, l, h) order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, CellKey)> + '_ {
        (0..self.prompt_seeds.len()).flat_map(move |p| self.grid.keys().map(move |k| (p, k)))
    }
}

impl HeadSource for WorkloadSpec {
    fn layout(&self) -> VideoLayout {
        self.layout
    }

    fn grid(&self) -> GridDims {
        self.grid
    }

    fn prompt_count(&self) -> usize {
        self.prompt_seeds.len()
    }

    fn head_input(&self, prompt: usize, key: CellKey) -> Result<AttentionHeadInput> {
        WorkloadSpec::head_input(self, prompt, key)
    }
}

/// Named suite constructions used by the configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadPreset {
    /// Cycles block-sparse, repetitive, mixed, dense-noise across heads.
    DeskDefault,
    /// Every head block-sparse with small prompt noise.
    DeskBlockSparse,
    /// Every head repetitive.
    DeskRepetitive,
    /// Every head dense-noise.
    DeskDenseNoise,
}

impl WorkloadPreset {
    /// Expands the preset into a concrete spec. Prompt seeds and
    /// structural seeds derive from `seed`.
    pub fn build(
        &self,
        layout: VideoLayout,
        grid: GridDims,
        head_dim: usize,
        seed: u64,
        prompts: usize,
    ) -> Result<WorkloadSpec> {
        if prompts == 0 {
            return Err(Error::config("workload needs at least one prompt"));
        }
        let rng = CounterRng::new(seed);
        let prompt_seeds = (0..prompts as u64)
            .map(|i| rng.next_u64(&[NS_PROMPT, i]))
            .collect();
        let mut profiles = Vec::with_capacity(grid.layers * grid.heads);
        for l in 0..grid.layers {
            for h in 0..grid.heads {
                let sseed = rng.next_u64(&[l as u64, h as u64]);
                let profile = match self {
                    WorkloadPreset::DeskBlockSparse => HeadProfile::block_sparse(sseed),
                    WorkloadPreset::DeskRepetitive => HeadProfile::repetitive(sseed),
                    WorkloadPreset::DeskDenseNoise => HeadProfile::dense_noise(sseed),
                    WorkloadPreset::DeskDefault => match (l * grid.heads + h) % 4 {
                        0 => HeadProfile::block_sparse(sseed),
                        1 => HeadProfile::repetitive(sseed),
                        2 => HeadProfile::mixed(sseed),
                        _ => HeadProfile::dense_noise(sseed),
                    },
                };
                profiles.push(profile);
            }
        }
        let spec = WorkloadSpec {
            layout,
            grid,
            head_dim,
            prompt_seeds,
            profiles,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::per_prompt_mask;
    use crate::math::post_softmax_map;

    fn desk_grid() -> GridDims {
        GridDims {
            timesteps: 4,
            layers: 2,
            heads: 2,
        }
    }

    fn cell(t: usize) -> CellKey {
        CellKey {
            timestep: t,
            layer: 0,
            head: 0,
        }
    }

    #[test]
    fn counter_rng_is_order_independent() {
        let rng = CounterRng::new(42);
        let a = rng.uniform(&[3, 7]);
        let _ = rng.uniform(&[9, 1]);
        assert_eq!(rng.uniform(&[3, 7]), a);
        assert_ne!(rng.next_u64(&[1]), rng.next_u64(&[2]));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = WorkloadPreset::DeskDefault
            .build(VideoLayout::desk_default(), desk_grid(), 16, 7, 2)
            .unwrap();
        let a = spec.head_input(0, cell(1)).unwrap();
        let b = spec.head_input(0, cell(1)).unwrap();
        assert_eq!(a.q.as_slice(), b.q.as_slice());
        assert_eq!(a.k.as_slice(), b.k.as_slice());
        assert_eq!(a.v.as_slice(), b.v.as_slice());
        // Different prompts differ in Q (noise) but share K and V.
        let c = spec.head_input(1, cell(1)).unwrap();
        assert_ne!(a.q.as_slice(), c.q.as_slice());
        assert_eq!(a.k.as_slice(), c.k.as_slice());
    }

    #[test]
    fn suite_enumerates_every_cell() {
        let spec = WorkloadPreset::DeskDefault
            .build(VideoLayout::desk_default(), desk_grid(), 8, 3, 2)
            .unwrap();
        assert_eq!(spec.cell_count(), 2 * 4 * 2 * 2);
        assert_eq!(spec.cells().count(), spec.cell_count());
    }

    #[test]
    fn block_sparse_mask_recovers_seeded_pattern() {
        let layout = VideoLayout::desk_default();
        let profile = HeadProfile::block_sparse(99).with_sigma(0.0);
        let input = generate_head(&profile, 1234, cell(0), &layout, 16, 4).unwrap();
        let p = post_softmax_map(&input).unwrap();
        let mask = per_prompt_mask(&p, &layout, 0.97).unwrap();
        let expected = profile.expected_pattern(&layout, 0, 4).unwrap();
        assert_eq!(mask, expected);
    }

    #[test]
    fn block_sparse_recovery_holds_on_ragged_layout() {
        let layout = VideoLayout::desk_ragged();
        let profile = HeadProfile::block_sparse(5).with_sigma(0.0);
        let input = generate_head(&profile, 77, cell(2), &layout, 16, 4).unwrap();
        let p = post_softmax_map(&input).unwrap();
        let mask = per_prompt_mask(&p, &layout, 0.97).unwrap();
        let expected = profile.expected_pattern(&layout, 2, 4).unwrap();
        assert_eq!(mask, expected);
    }

    #[test]
    fn prompt_noise_preserves_pattern_support() {
        let layout = VideoLayout::desk_default();
        let profile = HeadProfile::block_sparse(21); // sigma = 0.5
        let masks: Vec<_> = (0..2)
            .map(|p| {
                let input = generate_head(&profile, 1000 + p, cell(0), &layout, 16, 4).unwrap();
                let pm = post_softmax_map(&input).unwrap();
                per_prompt_mask(&pm, &layout, 0.97).unwrap()
            })
            .collect();
        let inter = masks[0]
            .bits()
            .iter()
            .zip(masks[1].bits())
            .filter(|(&a, &b)| a && b)
            .count();
        let union = masks[0]
            .bits()
            .iter()
            .zip(masks[1].bits())
            .filter(|(&a, &b)| a || b)
            .count();
        assert!(inter as f64 / union as f64 >= 0.9);
    }

    #[test]
    fn kept_set_iou_degrades_with_noise() {
        let layout = VideoLayout::desk_default();
        let mut prev = f64::INFINITY;
        for &sigma in &[0.0, 30.0, 120.0] {
            let mut total = 0.0;
            let mut count = 0;
            for seed in 0..20u64 {
                let profile = HeadProfile::block_sparse(seed).with_sigma(sigma);
                let masks: Vec<_> = (0..2)
                    .map(|p| {
                        let input =
                            generate_head(&profile, 500 + seed * 2 + p, cell(0), &layout, 16, 4)
                                .unwrap();
                        let pm = post_softmax_map(&input).unwrap();
                        per_prompt_mask(&pm, &layout, 0.95).unwrap()
                    })
                    .collect();
                let inter = masks[0]
                    .bits()
                    .iter()
                    .zip(masks[1].bits())
                    .filter(|(&a, &b)| a && b)
                    .count();
                let union = masks[0]
                    .bits()
                    .iter()
                    .zip(masks[1].bits())
                    .filter(|(&a, &b)| a || b)
                    .count();
                total += inter as f64 / union as f64;
                count += 1;
            }
            let mean = total / count as f64;
            assert!(
                mean <= prev + 1e-12,
                "mean kept-set IoU should not increase with noise: {mean} after {prev}"
            );
            prev = mean;
        }
    }

    #[test]
    fn late_stable_patterns_freeze_at_midpoint() {
        let layout = VideoLayout::desk_default();
        let profile = HeadProfile::block_sparse(13);
        let p2 = profile.expected_pattern(&layout, 2, 4).unwrap();
        let p3 = profile.expected_pattern(&layout, 3, 4).unwrap();
        let p0 = profile.expected_pattern(&layout, 0, 4).unwrap();
        assert_eq!(p2, p3);
        assert_ne!(p0, p2);
    }
}
