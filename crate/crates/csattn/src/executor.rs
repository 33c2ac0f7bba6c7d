//! Reference sparse execution and sparsity/error accounting.
//!
//! `sparse_attention` renormalizes the softmax over the kept key blocks
//! of each query block-row — the semantics a block-skipping online
//! softmax computes. `anchor_attention` computes dense attention for the
//! anchor spatial rows only and copies each anchor's output to the rows
//! it covers, position by position. Key sums run in ascending index
//! order, so an all-ones mask (or every row being an anchor) reproduces
//! dense attention bitwise.

use crate::calibration::{BlockMask, DictEntry, MaskDictionary};
use crate::error::{Error, Result};
use crate::layout::{anchor_rows, nearest_anchor, VideoLayout};
use crate::math::{dense_attention, logits_row_into, relative_error, AttentionHeadInput, Matrix};
use crate::repetition::repetition_sparsity;
use crate::workloads::HeadSource;
use serde::{Deserialize, Serialize};

/// Block-sparse attention under a calibrated mask: softmax over exactly
/// the keys in kept blocks (skipped keys leave the normalizer too), then
/// the weighted sum of the corresponding value rows.
pub fn sparse_attention(input: &AttentionHeadInput, mask: &BlockMask) -> Result<Matrix> {
    let layout = &mask.layout;
    let n = layout.seq_len();
    if input.seq_len() != n {
        return Err(Error::invalid(format!(
            "head has {} tokens, mask layout expects {n}",
            input.seq_len()
        )));
    }
    let d = input.head_dim();
    let mut out = Matrix::zeros(n, d);
    let mut logits = vec![0.0; n];

    // Kept key ranges per block-row, resolved once.
    let mut kept_keys: Vec<Vec<std::ops::Range<usize>>> =
        Vec::with_capacity(layout.num_query_blocks());
    for r in 0..layout.num_query_blocks() {
        let ranges = mask
            .kept_in_row(r)
            .into_iter()
            .map(|c| layout.key_block_indices(c))
            .collect::<Result<Vec<_>>>()?;
        kept_keys.push(ranges);
    }

    for i in 0..n {
        logits_row_into(input, i, &mut logits);
        let ranges = &kept_keys[layout.query_block_of(i)];

        let mut max = f64::NEG_INFINITY;
        for range in ranges {
            for j in range.clone() {
                max = max.max(logits[j]);
            }
        }
        let mut denom = 0.0;
        for range in ranges {
            for j in range.clone() {
                denom += (logits[j] - max).exp();
            }
        }
        let orow = out.row_mut(i);
        for range in ranges {
            for j in range.clone() {
                let w = (logits[j] - max).exp() / denom;
                let vrow = input.v.row(j);
                for t in 0..d {
                    orow[t] += w * vrow[t];
                }
            }
        }
    }
    Ok(out)
}

/// Anchor-row attention: dense attention for queries in the `k` anchor
/// spatial rows of each frame; every other row copies its nearest
/// anchor's output, query position by query position.
pub fn anchor_attention(
    input: &AttentionHeadInput,
    layout: &VideoLayout,
    k: usize,
) -> Result<Matrix> {
    let n = layout.seq_len();
    if input.seq_len() != n {
        return Err(Error::invalid(format!(
            "head has {} tokens, layout expects {n}",
            input.seq_len()
        )));
    }
    let anchors = anchor_rows(layout.rows_per_frame, k)?;
    let d = input.head_dim();
    let mut out = Matrix::zeros(n, d);
    let mut logits = vec![0.0; n];
    let mut weights = vec![0.0; n];

    for f in 0..layout.frames {
        // Compute the anchor rows of this frame densely.
        for &a in &anchors {
            for q in layout.spatial_row_indices(f, a)? {
                logits_row_into(input, q, &mut logits);
                crate::math::softmax_row_into(&logits, &mut weights);
                let orow = out.row_mut(q);
                for (j, &w) in weights.iter().enumerate() {
                    let vrow = input.v.row(j);
                    for t in 0..d {
                        orow[t] += w * vrow[t];
                    }
                }
            }
        }
        // Broadcast to the remaining rows.
        for i in 0..layout.rows_per_frame {
            let a = anchors[nearest_anchor(i, &anchors)];
            if a == i {
                continue;
            }
            let src = layout.spatial_row_indices(f, a)?;
            let dst = layout.spatial_row_indices(f, i)?;
            for (qa, qi) in src.zip(dst) {
                let row = out.row(qa).to_vec();
                out.row_mut(qi).copy_from_slice(&row);
            }
        }
    }
    Ok(out)
}

/// Fraction of skipped query-key interactions for one dictionary entry.
///
/// Masks count exact token areas (ragged blocks included); repetitive
/// entries induce `1 - k/H`.
pub fn sparsity_of_cell(entry: &DictEntry, layout: &VideoLayout) -> f64 {
    match entry {
        DictEntry::Mask(mask) => {
            let n = layout.seq_len();
            let kept = kept_pair_count(mask, layout);
            1.0 - kept as f64 / (n as f64 * n as f64)
        }
        DictEntry::Repetitive { anchors } => {
            repetition_sparsity(layout.rows_per_frame, *anchors as usize)
        }
    }
}

/// Kept query-key pairs of a mask, in exact integer arithmetic.
fn kept_pair_count(mask: &BlockMask, layout: &VideoLayout) -> u64 {
    let mut kept = 0u64;
    for r in 0..mask.num_rows() {
        let qlen = layout.query_block_indices(r).unwrap().len() as u64;
        for c in mask.kept_in_row(r) {
            let klen = layout.key_block_indices(c).unwrap().len() as u64;
            kept += qlen * klen;
        }
    }
    kept
}

/// Skipped query-key pairs for one entry.
pub fn skipped_pair_count(entry: &DictEntry, layout: &VideoLayout) -> u64 {
    let n = layout.seq_len() as u64;
    match entry {
        DictEntry::Mask(mask) => n * n - kept_pair_count(mask, layout),
        DictEntry::Repetitive { anchors } => {
            let skipped_rows =
                (layout.rows_per_frame - *anchors as usize) as u64 * layout.row_width as u64;
            skipped_rows * layout.frames as u64 * n
        }
    }
}

/// Per-cell evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub timestep: usize,
    pub layer: usize,
    pub head: usize,
    /// "mask" or "repetitive".
    pub kind: String,
    pub sparsity: f64,
    pub skipped_pairs: u64,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
}

/// Sparsity and fidelity of a dictionary over a workload suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Mean of per-cell sparsity values.
    pub overall_sparsity: f64,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
    pub eval_prompts: usize,
    pub cells: Vec<CellReport>,
}

/// Runs the reference sparse or anchor path for every grid cell against
/// the first `eval_prompts` workload prompts and compares with dense
/// attention.
pub fn evaluate(
    dict: &MaskDictionary,
    source: &impl HeadSource,
    eval_prompts: usize,
) -> Result<SparsityReport> {
    if dict.grid != source.grid() {
        return Err(Error::config(format!(
            "dictionary grid {:?} does not match workload grid {:?}",
            dict.grid,
            source.grid()
        )));
    }
    if dict.layout != source.layout() {
        return Err(Error::config("dictionary layout does not match workload"));
    }
    let prompts = eval_prompts.min(source.prompt_count()).max(1);
    let layout = &dict.layout;
    let mut cells = Vec::with_capacity(dict.grid.cell_count());
    let mut sparsity_sum = 0.0;
    let mut err_sum = 0.0;
    let mut err_max = 0.0f64;
    for key in dict.grid.keys() {
        let entry = dict.get(key)?;
        let mut cell_err_sum = 0.0;
        let mut cell_err_max = 0.0f64;
        for prompt in 0..prompts {
            let input = source.head_input(prompt, key)?;
            let exact = dense_attention(&input)?;
            let approx = match entry {
                DictEntry::Mask(mask) => sparse_attention(&input, mask)?,
                DictEntry::Repetitive { anchors } => {
                    anchor_attention(&input, layout, *anchors as usize)?
                }
            };
            let err = relative_error(&approx, &exact)?;
            cell_err_sum += err;
            cell_err_max = cell_err_max.max(err);
        }
        let sparsity = sparsity_of_cell(entry, layout);
        sparsity_sum += sparsity;
        let mean_err = cell_err_sum / prompts as f64;
        err_sum += mean_err;
        err_max = err_max.max(cell_err_max);
        cells.push(CellReport {
            timestep: key.timestep,
            layer: key.layer,
            head: key.head,
            kind: match entry {
                DictEntry::Mask(_) => "mask".to_string(),
                DictEntry::Repetitive { .. } => "repetitive".to_string(),
            },
            sparsity,
            skipped_pairs: skipped_pair_count(entry, layout),
            mean_relative_error: mean_err,
            max_relative_error: cell_err_max,
        });
    }
    let count = cells.len() as f64;
    Ok(SparsityReport {
        overall_sparsity: sparsity_sum / count,
        mean_relative_error: err_sum / count,
        max_relative_error: err_max,
        eval_prompts: prompts,
        cells,
    })
}
