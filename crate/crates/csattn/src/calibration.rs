//! Energy-based block selection and cross-input mask aggregation.
//!
//! For one attention map, each (query block-row, key block-column) pair
//! gets an energy: the attention mass the block-row's queries allocate to
//! that key block, averaged over the queries so each row of the energy
//! matrix sums to 1. Per row we keep the smallest set of key blocks whose
//! energy reaches a threshold, average the resulting binary masks over
//! calibration inputs, and re-binarize with an agreement threshold.

use crate::error::{Error, Result};
use crate::layout::VideoLayout;
use crate::math::Matrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-(block-row, block-column) attention mass. Rows sum to 1.
#[derive(Debug, Clone)]
pub struct BlockEnergyMatrix {
    pub layout: VideoLayout,
    energies: Matrix,
}

impl BlockEnergyMatrix {
    pub fn num_rows(&self) -> usize {
        self.energies.rows()
    }

    pub fn num_cols(&self) -> usize {
        self.energies.cols()
    }

    /// Energies of query block-row `r`.
    pub fn row(&self, r: usize) -> &[f64] {
        self.energies.row(r)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.energies.get(r, c)
    }
}

/// Block energies accumulated one query row at a time, never holding the
/// full attention map: each row's softmax is reduced into per-key-block
/// sums immediately. Matches [`block_energy`] over the materialized map
/// bit for bit (same accumulation order).
pub fn streaming_block_energy(
    input: &crate::math::AttentionHeadInput,
    layout: &VideoLayout,
) -> Result<BlockEnergyMatrix> {
    let n = layout.seq_len();
    if input.seq_len() != n {
        return Err(Error::invalid(format!(
            "head has {} tokens, layout expects {n}",
            input.seq_len()
        )));
    }
    let n_bq = layout.num_query_blocks();
    let n_bkv = layout.num_key_blocks();
    let mut energies = Matrix::zeros(n_bq, n_bkv);
    let mut logits = vec![0.0; n];
    let mut probs = vec![0.0; n];
    for r in 0..n_bq {
        let queries = layout.query_block_indices(r)?;
        let inv = 1.0 / queries.len() as f64;
        for i in queries {
            crate::math::logits_row_into(input, i, &mut logits);
            crate::math::softmax_row_into(&logits, &mut probs);
            for (c, e) in energies.row_mut(r).iter_mut().enumerate() {
                let keys = c * layout.key_block..((c + 1) * layout.key_block).min(n);
                let mass: f64 = probs[keys].iter().sum();
                *e += mass * inv;
            }
        }
    }
    Ok(BlockEnergyMatrix {
        layout: *layout,
        energies,
    })
}

/// Block energy of a row-stochastic attention map: averages each query
/// block-row's per-key-block mass over the queries it contains, so ragged
/// blocks stay row-stochastic.
pub fn block_energy(p: &Matrix, layout: &VideoLayout) -> Result<BlockEnergyMatrix> {
    let n = layout.seq_len();
    if p.rows() != n || p.cols() != n {
        return Err(Error::invalid(format!(
            "attention map is {}x{{}}, layout expects {n}x{n}",
            p.rows()
        )));
    }
    for i in 0..n {
        let sum: f64 = p.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-9 || p.row(i).iter().any(|&x| x < 0.0) {
            return Err(Error::invalid(format!(
                "attention map row {i} is not a probability distribution"
            )));
        }
    }

    let n_bq = layout.num_query_blocks();
    let n_bkv = layout.num_key_blocks();
    let mut energies = Matrix::zeros(n_bq, n_bkv);
    for r in 0..n_bq {
        let queries = layout.query_block_indices(r)?;
        let inv = 1.0 / queries.len() as f64;
        for i in queries {
            let prow = p.row(i);
            for (c, e) in energies.row_mut(r).iter_mut().enumerate() {
                let keys = c * layout.key_block..((c + 1) * layout.key_block).min(n);
                let mass: f64 = prow[keys].iter().sum();
                *e += mass * inv;
            }
        }
    }
    Ok(BlockEnergyMatrix {
        layout: *layout,
        energies,
    })
}

/// How the schedule's base level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BaseLevel {
    /// A fixed base level.
    Fixed { base: f64 },
    /// Base level grows linearly with the attention sequence length:
    /// `0.796 + 1.41e-6 * N`, clamped to `(0, C]`.
    SequenceLength,
}

/// Exponential energy-threshold schedule over timesteps:
/// `eps(t) = A + (C - A) * exp(-k t / T)` with `t = 0` the highest-noise
/// step, so `eps(0) = C` exactly and the threshold decays toward `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    #[serde(flatten)]
    pub base: BaseLevel,
    /// Initial level `C`.
    pub initial: f64,
    /// Decay rate `k`.
    pub decay: f64,
    /// Total timesteps `T`.
    pub timesteps: usize,
}

/// Coefficients of the sequence-length base level.
const BASE_INTERCEPT: f64 = 0.796;
const BASE_SLOPE: f64 = 1.41e-6;

/// Thresholds are clamped strictly below 1 so float accumulation cannot
/// demand more mass than a row holds.
pub const EPSILON_CEILING: f64 = 1.0 - 1e-12;

impl EpsilonSchedule {
    pub fn new(base: BaseLevel, initial: f64, decay: f64, timesteps: usize) -> Result<Self> {
        let schedule = EpsilonSchedule {
            base,
            initial,
            decay,
            timesteps,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Range checks, also applied to schedules deserialized from config
    /// files.
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.initial <= 1.0) {
            return Err(Error::invalid("initial level C must be in (0, 1]"));
        }
        if let BaseLevel::Fixed { base } = self.base {
            if !(base > 0.0 && base < 1.0) {
                return Err(Error::invalid("base level A must be in (0, 1)"));
            }
            if base > self.initial {
                return Err(Error::invalid("base level A must not exceed C"));
            }
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::invalid("decay rate k must be non-negative"));
        }
        if self.timesteps == 0 {
            return Err(Error::invalid("schedule needs at least one timestep"));
        }
        Ok(())
    }

    /// The high-step-regime schedule: C=0.99, k=16, base level tied to
    /// the sequence length.
    pub fn high_step(timesteps: usize) -> Self {
        EpsilonSchedule::new(BaseLevel::SequenceLength, 0.99, 16.0, timesteps).unwrap()
    }

    /// The few-step (distilled-regime) schedule: A=0.763, C=0.863, k=5.64.
    pub fn distilled(timesteps: usize) -> Self {
        EpsilonSchedule::new(BaseLevel::Fixed { base: 0.763 }, 0.863, 5.64, timesteps).unwrap()
    }

    /// Resolved base level `A` for sequence length `n`.
    pub fn base_level(&self, n: usize) -> f64 {
        match self.base {
            BaseLevel::Fixed { base } => base,
            BaseLevel::SequenceLength => {
                (BASE_INTERCEPT + BASE_SLOPE * n as f64).clamp(f64::MIN_POSITIVE, self.initial)
            }
        }
    }

    /// Energy threshold at timestep `t` for sequence length `n`, clamped
    /// to `(0, 1 - 1e-12]`.
    pub fn epsilon_at(&self, t: usize, n: usize) -> Result<f64> {
        if t >= self.timesteps {
            return Err(Error::invalid(format!(
                "timestep {t} outside schedule of {} steps",
                self.timesteps
            )));
        }
        // exp(0) = 1 forces eps(0) = C; return it directly rather than
        // through `a + (C - a)`, which can round away from C.
        if t == 0 {
            return Ok(self.initial.min(EPSILON_CEILING));
        }
        let a = self.base_level(n);
        let eps = a + (self.initial - a) * (-self.decay * t as f64 / self.timesteps as f64).exp();
        Ok(eps.min(EPSILON_CEILING))
    }
}

/// Smallest set of key blocks whose cumulative energy reaches `epsilon`.
///
/// Energies are sorted descending with ties broken by ascending block
/// index; the greedy prefix is an exact minimizer of the kept count. At
/// least one block is always kept, and if rounding leaves the whole row
/// short of `epsilon`, every block is kept. Returns indices ascending.
pub fn select_blocks(energy_row: &[f64], epsilon: f64) -> Result<Vec<usize>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie strictly inside (0, 1)"));
    }
    if energy_row.is_empty() {
        return Err(Error::invalid("energy row is empty"));
    }
    if energy_row.iter().any(|&e| e.is_nan() || e < 0.0) {
        return Err(Error::invalid("energies must be non-negative"));
    }
    let mut order: Vec<usize> = (0..energy_row.len()).collect();
    order.sort_by(|&a, &b| {
        energy_row[b]
            .partial_cmp(&energy_row[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept = Vec::new();
    let mut cumulative = 0.0;
    for idx in order {
        kept.push(idx);
        cumulative += energy_row[idx];
        if cumulative >= epsilon {
            break;
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Binary keep/skip decisions at block granularity. Every row keeps at
/// least one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    pub layout: VideoLayout,
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BlockMask {
    /// Builds a mask from row-major bits, enforcing the non-empty-row
    /// invariant.
    pub fn from_bits(layout: VideoLayout, bits: Vec<bool>) -> Result<Self> {
        let rows = layout.num_query_blocks();
        let cols = layout.num_key_blocks();
        if bits.len() != rows * cols {
            return Err(Error::invalid(format!(
                "mask needs {rows}x{cols} bits, got {}",
                bits.len()
            )));
        }
        let mask = BlockMask {
            layout,
            rows,
            cols,
            bits,
        };
        for r in 0..rows {
            if !mask.row(r).iter().any(|&b| b) {
                return Err(Error::invalid(format!("mask row {r} keeps no blocks")));
            }
        }
        Ok(mask)
    }

    /// All-ones mask: nothing skipped.
    pub fn all_ones(layout: VideoLayout) -> Self {
        let rows = layout.num_query_blocks();
        let cols = layout.num_key_blocks();
        BlockMask {
            layout,
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Count of kept blocks.
    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Kept key-block columns of row `r`, ascending.
    pub fn kept_in_row(&self, r: usize) -> Vec<usize> {
        self.row(r)
            .iter()
            .enumerate()
            .filter_map(|(c, &b)| b.then_some(c))
            .collect()
    }

    /// True if every block kept by `other` is kept by `self`.
    pub fn is_superset_of(&self, other: &BlockMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }
}

/// Per-prompt mask: block energies of `p` thresholded row-wise at
/// `epsilon`.
pub fn per_prompt_mask(p: &Matrix, layout: &VideoLayout, epsilon: f64) -> Result<BlockMask> {
    let energy = block_energy(p, layout)?;
    mask_from_energy(&energy, epsilon)
}

/// Row-wise greedy selection applied to a precomputed energy matrix.
pub fn mask_from_energy(energy: &BlockEnergyMatrix, epsilon: f64) -> Result<BlockMask> {
    let rows = energy.num_rows();
    let cols = energy.num_cols();
    let mut bits = vec![false; rows * cols];
    for r in 0..rows {
        for c in select_blocks(energy.row(r), epsilon)? {
            bits[r * cols + c] = true;
        }
    }
    BlockMask::from_bits(energy.layout, bits)
}

/// Elementwise mean of per-prompt binary masks.
#[derive(Debug, Clone)]
pub struct AggregatedMask {
    pub layout: VideoLayout,
    pub prompt_count: usize,
    means: Matrix,
}

impl AggregatedMask {
    pub fn num_rows(&self) -> usize {
        self.means.rows()
    }

    pub fn num_cols(&self) -> usize {
        self.means.cols()
    }

    pub fn mean(&self, r: usize, c: usize) -> f64 {
        self.means.get(r, c)
    }

    pub fn means(&self) -> &[f64] {
        self.means.as_slice()
    }

    /// Fraction of blocks whose keep rate is at most `lo` or at least
    /// `hi` — the bimodality measure of the keep-rate distribution.
    pub fn bimodal_fraction(&self, lo: f64, hi: f64) -> f64 {
        let total = self.means().len();
        let extreme = self.means().iter().filter(|&&m| m <= lo || m >= hi).count();
        extreme as f64 / total as f64
    }
}

/// Averages per-prompt masks elementwise. All masks must share a layout.
///
/// Means are integer keep counts divided once, so a block kept by every
/// prompt reads exactly 1.0 regardless of the prompt count.
pub fn aggregate_masks(masks: &[BlockMask]) -> Result<AggregatedMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty mask list"))?;
    let (rows, cols) = (first.num_rows(), first.num_cols());
    for m in masks {
        if m.layout != first.layout {
            return Err(Error::invalid("aggregated masks must share a layout"));
        }
    }
    let mut counts = vec![0usize; rows * cols];
    for m in masks {
        for (count, &bit) in counts.iter_mut().zip(m.bits()) {
            *count += bit as usize;
        }
    }
    let n = masks.len() as f64;
    let mut means = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            means.set(r, c, counts[r * cols + c] as f64 / n);
        }
    }
    Ok(AggregatedMask {
        layout: first.layout,
        prompt_count: masks.len(),
        means,
    })
}

/// Binarizes an aggregated mask: keep a block iff its mean keep rate is
/// at least `rho`. A row emptied by the threshold re-keeps its single
/// highest-mean block (ties to the lowest index) so the sparse softmax
/// stays defined.
pub fn threshold_mask(agg: &AggregatedMask, rho: f64) -> Result<BlockMask> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid("agreement threshold must be in (0, 1]"));
    }
    let (rows, cols) = (agg.num_rows(), agg.num_cols());
    let mut bits = vec![false; rows * cols];
    for r in 0..rows {
        let mut any = false;
        for c in 0..cols {
            if agg.mean(r, c) >= rho {
                bits[r * cols + c] = true;
                any = true;
            }
        }
        if !any {
            let mut best = 0;
            for c in 1..cols {
                if agg.mean(r, c) > agg.mean(r, best) {
                    best = c;
                }
            }
            bits[r * cols + best] = true;
        }
    }
    BlockMask::from_bits(agg.layout, bits)
}

/// Histogram of mean keep rates over `[0, 1]`; bin `i` covers
/// `[i/bins, (i+1)/bins)` with 1.0 folded into the top bin.
pub fn keep_rate_histogram(agg: &AggregatedMask, bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::invalid("histogram needs at least two bins"));
    }
    let mut counts = vec![0usize; bins];
    for &m in agg.means() {
        let idx = ((m * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Identifies one attention map in the (timestep, layer, head) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub timestep: usize,
    pub layer: usize,
    pub head: usize,
}

/// Grid extents of a mask dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub timesteps: usize,
    pub layers: usize,
    pub heads: usize,
}

impl GridDims {
    pub fn cell_count(&self) -> usize {
        self.timesteps * self.layers * self.heads
    }

    /// Lexicographic (t, l, h) enumeration.
    pub fn keys(&self) -> impl Iterator<Item = CellKey> + '_ {
        let (tn, ln, hn) = (self.timesteps, self.layers, self.heads);
        (0..tn).flat_map(move |t| {
            (0..ln).flat_map(move |l| {
                (0..hn).map(move |h| CellKey {
                    timestep: t,
                    layer: l,
                    head: h,
                })
            })
        })
    }

    pub fn index_of(&self, key: CellKey) -> usize {
        (key.timestep * self.layers + key.layer) * self.heads + key.head
    }
}

/// A calibrated decision for one grid cell: either a block mask or a
/// marker that the head is handled by anchor-row attention with `k`
/// anchors per frame.
#[derive(Debug, Clone, PartialEq)]
pub enum DictEntry {
    Mask(BlockMask),
    Repetitive { anchors: u16 },
}

impl DictEntry {
    pub fn as_mask(&self) -> Option<&BlockMask> {
        match self {
            DictEntry::Mask(m) => Some(m),
            DictEntry::Repetitive { .. } => None,
        }
    }
}

/// The calibrated per-(timestep, layer, head) store, covering the whole
/// grid exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDictionary {
    pub layout: VideoLayout,
    pub grid: GridDims,
    entries: Vec<DictEntry>,
}

impl MaskDictionary {
    /// Builds a dictionary from a complete (t, l, h) -> entry map.
    pub fn from_entries(
        layout: VideoLayout,
        grid: GridDims,
        mut map: BTreeMap<CellKey, DictEntry>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(grid.cell_count());
        for key in grid.keys() {
            let entry = map.remove(&key).ok_or_else(|| {
                Error::config(format!(
                    "dictionary is missing entry for t={} l={} h={}",
                    key.timestep, key.layer, key.head
                ))
            })?;
            if let DictEntry::Mask(m) = &entry {
                if m.layout != layout {
                    return Err(Error::config("dictionary mask layout mismatch"));
                }
            }
            entries.push(entry);
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::config(format!(
                "entry t={} l={} h={} lies outside the grid",
                extra.timestep, extra.layer, extra.head
            )));
        }
        Ok(MaskDictionary {
            layout,
            grid,
            entries,
        })
    }

    /// Builds a dictionary from entries already in (t, l, h) order.
    pub fn from_ordered(
        layout: VideoLayout,
        grid: GridDims,
        entries: Vec<DictEntry>,
    ) -> Result<Self> {
        if entries.len() != grid.cell_count() {
            return Err(Error::config(format!(
                "dictionary has {} entries, grid needs {}",
                entries.len(),
                grid.cell_count()
            )));
        }
        for entry in &entries {
            if let DictEntry::Mask(m) = entry {
                if m.layout != layout {
                    return Err(Error::config("dictionary mask layout mismatch"));
                }
            }
        }
        Ok(MaskDictionary {
            layout,
            grid,
            entries,
        })
    }

    pub fn get(&self, key: CellKey) -> Result<&DictEntry> {
        if key.timestep >= self.grid.timesteps
            || key.layer >= self.grid.layers
            || key.head >= self.grid.heads
        {
            return Err(Error::config(format!(
                "cell t={} l={} h={} outside dictionary grid",
                key.timestep, key.layer, key.head
            )));
        }
        Ok(&self.entries[self.grid.index_of(key)])
    }

    pub fn entries(&self) -> impl Iterator<Item = (CellKey, &DictEntry)> + '_ {
        self.grid
            .keys()
            .map(move |k| (k, &self.entries[self.grid.index_of(k)]))
    }

    /// Replaces the entry at `key`; used by timestep sharing.
    pub fn replace(&mut self, key: CellKey, entry: DictEntry) {
        let idx = self.grid.index_of(key);
        self.entries[idx] = entry;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::CounterRng;
    use proptest::prelude::*;

    fn uniform_p(n: usize) -> Matrix {
        Matrix::from_vec(n, n, vec![1.0 / n as f64; n * n]).unwrap()
    }

    fn random_stochastic(n: usize, seed: u64) -> Matrix {
        let rng = CounterRng::new(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let row = m.row_mut(i);
            let mut sum = 0.0;
            for (j, r) in row.iter_mut().enumerate() {
                *r = rng.uniform(&[i as u64, j as u64]) + 1e-6;
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
        }
        m
    }

    fn tiny_layout(n: usize, b: usize) -> VideoLayout {
        VideoLayout::new(1, 1, n, b, b).unwrap()
    }

    /// One query block-row over `cols` single-token key blocks.
    fn single_row_layout(cols: usize) -> VideoLayout {
        VideoLayout::new(1, 1, cols, cols, 1).unwrap()
    }

    #[test]
    fn uniform_map_gives_uniform_energies() {
        let layout = tiny_layout(12, 4);
        let e = block_energy(&uniform_p(12), &layout).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((e.get(r, c) - 4.0 / 12.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_diagonal_map_gives_identity_energy() {
        let layout = tiny_layout(8, 4);
        let mut p = Matrix::zeros(8, 8);
        for i in 0..8 {
            let block = i / 4;
            for j in 4 * block..4 * (block + 1) {
                p.set(i, j, 0.25);
            }
        }
        let e = block_energy(&p, &layout).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((e.get(r, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_energy_matches_double_sum_oracle() {
        let layout = tiny_layout(12, 4);
        let p = random_stochastic(12, 5);
        let e = block_energy(&p, &layout).unwrap();
        // Brute-force double sum per block.
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for i in 4 * r..4 * (r + 1) {
                    for j in 4 * c..4 * (c + 1) {
                        acc += p.get(i, j);
                    }
                }
                acc /= 4.0;
                assert!((e.get(r, c) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_energy_rows_sum_to_one_with_ragged_blocks() {
        let layout = tiny_layout(10, 4); // blocks 4,4,2
        let p = random_stochastic(10, 9);
        let e = block_energy(&p, &layout).unwrap();
        for r in 0..e.num_rows() {
            let sum: f64 = e.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn block_energy_rejects_non_stochastic() {
        let layout = tiny_layout(4, 2);
        let bad = Matrix::from_vec(4, 4, vec![0.5; 16]).unwrap();
        assert!(matches!(
            block_energy(&bad, &layout),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn streaming_energy_matches_materialized_path() {
        // Ragged layout included: both routes must agree bit for bit.
        for layout in [VideoLayout::desk_default(), VideoLayout::desk_ragged()] {
            let profile = crate::workloads::HeadProfile::dense_noise(3);
            let input = crate::workloads::generate_head(
                &profile,
                11,
                CellKey {
                    timestep: 0,
                    layer: 0,
                    head: 0,
                },
                &layout,
                16,
                4,
            )
            .unwrap();
            let p = crate::math::post_softmax_map(&input).unwrap();
            let reference = block_energy(&p, &layout).unwrap();
            let streamed = streaming_block_energy(&input, &layout).unwrap();
            for r in 0..reference.num_rows() {
                assert_eq!(reference.row(r), streamed.row(r));
            }
        }
    }

    #[test]
    fn schedule_starts_at_initial_level() {
        let s = EpsilonSchedule::new(BaseLevel::Fixed { base: 0.8 }, 0.95, 7.3, 20).unwrap();
        assert_eq!(s.epsilon_at(0, 1000).unwrap(), 0.95);
        assert!(s.epsilon_at(20, 1000).is_err());
    }

    #[test]
    fn high_step_schedule_range() {
        // A(32760) = 0.796 + 1.41e-6 * 32760 = 0.8421916.
        let s = EpsilonSchedule::high_step(50);
        let a = s.base_level(32760);
        assert!((a - 0.8421916).abs() < 1e-9);
        assert_eq!(s.epsilon_at(0, 32760).unwrap(), 0.99);
        let last = s.epsilon_at(49, 32760).unwrap();
        assert!((last - 0.84219).abs() < 1e-4);
    }

    #[test]
    fn distilled_schedule_values() {
        let s = EpsilonSchedule::distilled(4);
        assert_eq!(s.epsilon_at(0, 75600).unwrap(), 0.863);
        // Decays toward the fixed base level.
        assert!(s.epsilon_at(3, 75600).unwrap() > 0.763);
        assert!(s.epsilon_at(3, 75600).unwrap() < 0.863);
    }

    #[test]
    fn select_blocks_examples() {
        assert_eq!(
            select_blocks(&[0.5, 0.3, 0.15, 0.05], 0.9).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(select_blocks(&[0.1; 10], 0.35).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(select_blocks(&[1.0], 0.5).unwrap(), vec![0]);
        // A row whose total falls short of epsilon keeps everything.
        assert_eq!(select_blocks(&[0.2, 0.1], 0.9).unwrap(), vec![0, 1]);
        assert!(select_blocks(&[0.5, 0.5], 0.0).is_err());
        assert!(select_blocks(&[0.5, 0.5], 1.0).is_err());
    }

    /// Exhaustive minimizer over all subsets; the independent oracle for
    /// greedy selection.
    fn brute_force_min_subset(row: &[f64], epsilon: f64) -> usize {
        let n = row.len();
        let mut best = n;
        for mask in 1u32..(1 << n) {
            let sum: f64 = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| row[i])
                .sum();
            if sum >= epsilon {
                best = best.min(mask.count_ones() as usize);
            }
        }
        best
    }

    #[test]
    fn greedy_selection_is_minimal() {
        let rng = CounterRng::new(77);
        for trial in 0..60u64 {
            let n = 2 + (rng.uniform(&[trial, 0]) * 9.0) as usize;
            let mut row: Vec<f64> = (0..n)
                .map(|i| rng.uniform(&[trial, 1 + i as u64]) + 1e-9)
                .collect();
            let sum: f64 = row.iter().sum();
            for r in row.iter_mut() {
                *r /= sum;
            }
            let epsilon = 0.5 + 0.45 * rng.uniform(&[trial, 99]);
            let kept = select_blocks(&row, epsilon).unwrap();
            let kept_energy: f64 = kept.iter().map(|&c| row[c]).sum();
            assert!(kept_energy >= epsilon);
            assert_eq!(kept.len(), brute_force_min_subset(&row, epsilon));
        }
    }

    #[test]
    fn per_prompt_mask_keeps_enough_energy() {
        let layout = tiny_layout(12, 4);
        let p = random_stochastic(12, 31);
        let epsilon = 0.8;
        let mask = per_prompt_mask(&p, &layout, epsilon).unwrap();
        let e = block_energy(&p, &layout).unwrap();
        for r in 0..mask.num_rows() {
            let kept = mask.kept_in_row(r);
            let kept_energy: f64 = kept.iter().map(|&c| e.get(r, c)).sum();
            assert!(kept_energy >= epsilon);
            // Dropping the weakest kept block must break the constraint.
            if kept.len() > 1 {
                let min_kept = kept
                    .iter()
                    .map(|&c| e.get(r, c))
                    .fold(f64::INFINITY, f64::min);
                assert!(kept_energy - min_kept < epsilon);
            }
        }
    }

    #[test]
    fn block_diagonal_mask_is_identity_pattern() {
        let layout = tiny_layout(8, 4);
        let mut p = Matrix::zeros(8, 8);
        for i in 0..8 {
            let block = i / 4;
            for j in 4 * block..4 * (block + 1) {
                p.set(i, j, 0.25);
            }
        }
        let mask = per_prompt_mask(&p, &layout, 0.9).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(mask.get(r, c), r == c);
            }
        }
    }

    #[test]
    fn aggregation_examples() {
        let layout = single_row_layout(3);
        let m1 = BlockMask::from_bits(layout, vec![true, false, true]).unwrap();
        let m2 = BlockMask::from_bits(layout, vec![true, true, false]).unwrap();
        let agg = aggregate_masks(&[m1.clone(), m2]).unwrap();
        assert_eq!(agg.mean(0, 0), 1.0);
        assert_eq!(agg.mean(0, 1), 0.5);
        assert_eq!(agg.mean(0, 2), 0.5);

        // Single-prompt aggregation is the identity.
        let single = aggregate_masks(std::slice::from_ref(&m1)).unwrap();
        let back = threshold_mask(&single, 0.4).unwrap();
        assert_eq!(back, m1);

        // Idempotence over identical masks, including prompt counts that
        // are not powers of two (means must still be exactly 0 or 1).
        for n in [3, 7, 64] {
            let many = aggregate_masks(&vec![m1.clone(); n]).unwrap();
            assert_eq!(threshold_mask(&many, 1.0).unwrap(), m1);
        }

        assert!(aggregate_masks(&[]).is_err());
    }

    #[test]
    fn threshold_examples() {
        let layout = single_row_layout(3);
        let m1 = BlockMask::from_bits(layout, vec![true, false, true]).unwrap();
        let m2 = BlockMask::from_bits(layout, vec![true, true, false]).unwrap();
        let agg = aggregate_masks(&[m1, m2]).unwrap();
        let at_half = threshold_mask(&agg, 0.5).unwrap();
        assert_eq!(at_half.row(0), &[true, true, true]);
        let at_06 = threshold_mask(&agg, 0.6).unwrap();
        assert_eq!(at_06.row(0), &[true, false, false]);
    }

    #[test]
    fn threshold_repairs_empty_rows() {
        let layout = tiny_layout(4, 2); // 2 block columns, 2 rows
                                        // Row 1 means all below rho: repair keeps its argmax (col 0 on tie).
        let m1 = BlockMask::from_bits(layout, vec![true, true, true, false]).unwrap();
        let m2 = BlockMask::from_bits(layout, vec![true, true, false, true]).unwrap();
        let agg = aggregate_masks(&[m1, m2]).unwrap();
        let t = threshold_mask(&agg, 0.9).unwrap();
        assert_eq!(t.row(0), &[true, true]);
        assert_eq!(t.row(1), &[true, false]);
    }

    #[test]
    fn histogram_examples() {
        let layout = single_row_layout(3);
        let ones = BlockMask::all_ones(layout);
        let agg = aggregate_masks(&[ones]).unwrap();
        let h = keep_rate_histogram(&agg, 10).unwrap();
        assert_eq!(h[9], 3);
        assert_eq!(h.iter().sum::<usize>(), 3);

        let m1 = BlockMask::from_bits(layout, vec![true, false, true]).unwrap();
        let m2 = BlockMask::from_bits(layout, vec![true, true, false]).unwrap();
        let agg = aggregate_masks(&[m1, m2]).unwrap();
        let h = keep_rate_histogram(&agg, 10).unwrap();
        assert_eq!(h[5], 2); // two blocks at 0.5
        assert_eq!(h[9], 1); // one block at 1.0
        assert!(keep_rate_histogram(&agg, 1).is_err());
    }

    #[test]
    fn dictionary_requires_full_grid() {
        let layout = tiny_layout(4, 2);
        let grid = GridDims {
            timesteps: 2,
            layers: 1,
            heads: 1,
        };
        let mut map = BTreeMap::new();
        map.insert(
            CellKey {
                timestep: 0,
                layer: 0,
                head: 0,
            },
            DictEntry::Mask(BlockMask::all_ones(layout)),
        );
        assert!(matches!(
            MaskDictionary::from_entries(layout, grid, map.clone()),
            Err(Error::Config(_))
        ));
        map.insert(
            CellKey {
                timestep: 1,
                layer: 0,
                head: 0,
            },
            DictEntry::Repetitive { anchors: 3 },
        );
        let dict = MaskDictionary::from_entries(layout, grid, map).unwrap();
        assert_eq!(dict.entries().count(), 2);
    }

    fn random_mask(layout: VideoLayout, seed: u64) -> BlockMask {
        let rng = CounterRng::new(seed);
        let rows = layout.num_query_blocks();
        let cols = layout.num_key_blocks();
        let mut bits = vec![false; rows * cols];
        for r in 0..rows {
            let mut any = false;
            for c in 0..cols {
                let b = rng.uniform(&[r as u64, c as u64]) < 0.5;
                bits[r * cols + c] = b;
                any |= b;
            }
            if !any {
                let forced = (rng.uniform(&[r as u64, 999]) * cols as f64) as usize;
                bits[r * cols + forced.min(cols - 1)] = true;
            }
        }
        BlockMask::from_bits(layout, bits).unwrap()
    }

    proptest! {
        #[test]
        fn epsilon_is_non_increasing(
            c in 0.5f64..1.0,
            a_frac in 0.1f64..1.0,
            k in 0.0f64..20.0,
            t_total in 2usize..60,
        ) {
            let a = (c * a_frac).max(1e-6);
            let s = EpsilonSchedule::new(BaseLevel::Fixed { base: a }, c, k, t_total).unwrap();
            let mut prev = f64::INFINITY;
            for t in 0..t_total {
                let eps = s.epsilon_at(t, 256).unwrap();
                prop_assert!(eps <= prev + 1e-15);
                prop_assert!(eps > 0.0 && eps <= EPSILON_CEILING);
                prev = eps;
            }
            prop_assert_eq!(s.epsilon_at(0, 256).unwrap(), c.min(EPSILON_CEILING));
        }

        #[test]
        fn greedy_prefix_grows_with_epsilon(seed in 0u64..2000) {
            let rng = CounterRng::new(seed);
            let n = 3 + (rng.uniform(&[0]) * 9.0) as usize;
            let mut row: Vec<f64> = (0..n).map(|i| rng.uniform(&[1 + i as u64]) + 1e-9).collect();
            let sum: f64 = row.iter().sum();
            for r in row.iter_mut() { *r /= sum; }
            let e1 = 0.3 + 0.3 * rng.uniform(&[50]);
            let e2 = e1 + (0.99 - e1) * rng.uniform(&[51]);
            let s1 = select_blocks(&row, e1).unwrap();
            let s2 = select_blocks(&row, e2).unwrap();
            for c in &s1 {
                prop_assert!(s2.contains(c), "kept set at lower epsilon must be contained");
            }
        }

        #[test]
        fn threshold_is_monotone_in_rho(seed in 0u64..500) {
            let layout = tiny_layout(12, 4);
            let masks: Vec<BlockMask> =
                (0..5).map(|i| random_mask(layout, seed * 31 + i)).collect();
            let agg = aggregate_masks(&masks).unwrap();
            let rng = CounterRng::new(seed ^ 0xabcdef);
            let r1 = 0.1 + 0.8 * rng.uniform(&[0]);
            let r2 = r1 + (1.0 - r1) * rng.uniform(&[1]);
            let low = threshold_mask(&agg, r1).unwrap();
            let high = threshold_mask(&agg, r2).unwrap();
            prop_assert!(low.is_superset_of(&high));
        }

        #[test]
        fn every_mask_row_keeps_a_block(seed in 0u64..500) {
            let layout = tiny_layout(10, 4);
            let p = random_stochastic(10, seed);
            let mask = per_prompt_mask(&p, &layout, 0.9).unwrap();
            for r in 0..mask.num_rows() {
                prop_assert!(!mask.kept_in_row(r).is_empty());
            }
        }
    }
}
