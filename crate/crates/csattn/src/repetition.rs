//! Spatial-repetition detection.
//!
//! A head is repetitive when the attention slices of spatial rows within
//! a frame are near-identical, so attention can be computed for a few
//! anchor rows per frame and broadcast to the rest. The score compares
//! each row's flattened attention slice against its nearest anchor row's
//! slice by cosine similarity; anchor rows contribute 1.

use crate::calibration::CellKey;
use crate::error::{Error, Result};
use crate::layout::{anchor_rows, nearest_anchor, VideoLayout};
use crate::math::Matrix;
use serde::{Deserialize, Serialize};

/// Mean spatial similarity of one grid cell across calibration prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub key: CellKey,
    /// Mean over `per_prompt`.
    pub score: f64,
    pub per_prompt: Vec<f64>,
    pub std_dev: f64,
}

impl SimilarityScore {
    pub fn from_prompts(key: CellKey, per_prompt: Vec<f64>) -> Result<Self> {
        if per_prompt.is_empty() {
            return Err(Error::invalid("similarity score needs at least one prompt"));
        }
        let n = per_prompt.len() as f64;
        let mean = per_prompt.iter().sum::<f64>() / n;
        let var = per_prompt
            .iter()
            .map(|s| (s - mean) * (s - mean))
            .sum::<f64>()
            / n;
        Ok(SimilarityScore {
            key,
            score: mean,
            per_prompt,
            std_dev: var.sqrt(),
        })
    }
}

/// Average cosine similarity between each spatial row's attention slice
/// and its nearest anchor row's slice, over all frames and rows.
///
/// A row's slice is `P[row tokens, :]` flattened in token order. Anchor
/// rows compare to themselves and contribute exactly 1.
pub fn spatial_similarity(p: &Matrix, layout: &VideoLayout, k: usize) -> Result<f64> {
    let n = layout.seq_len();
    if p.rows() != n || p.cols() != n {
        return Err(Error::invalid(format!(
            "attention map is {}x{}, layout expects {n}x{n}",
            p.rows(),
            p.cols()
        )));
    }
    let h = layout.rows_per_frame;
    let anchors = anchor_rows(h, k)?;
    let mut total = 0.0;
    for f in 0..layout.frames {
        for i in 0..h {
            let a = anchors[nearest_anchor(i, &anchors)];
            if a == i {
                total += 1.0;
                continue;
            }
            total += slice_cosine(p, layout, f, i, a)?;
        }
    }
    Ok(total / (layout.frames * h) as f64)
}

/// Cosine similarity between the flattened attention slices of rows `i`
/// and `a` in frame `f`, computed without materializing the slices.
fn slice_cosine(p: &Matrix, layout: &VideoLayout, f: usize, i: usize, a: usize) -> Result<f64> {
    let ri = layout.spatial_row_indices(f, i)?;
    let ra = layout.spatial_row_indices(f, a)?;
    let mut dot = 0.0;
    let mut ni = 0.0;
    let mut na = 0.0;
    for (qi, qa) in ri.zip(ra) {
        let rowi = p.row(qi);
        let rowa = p.row(qa);
        for j in 0..rowi.len() {
            dot += rowi[j] * rowa[j];
            ni += rowi[j] * rowi[j];
            na += rowa[j] * rowa[j];
        }
    }
    if ni == 0.0 || na == 0.0 {
        return Err(Error::degenerate(format!(
            "zero-norm attention slice in frame {f}"
        )));
    }
    Ok(dot / (ni.sqrt() * na.sqrt()))
}

/// True iff the mean similarity strictly exceeds the threshold.
pub fn detect_repetitive(score: f64, gamma: f64) -> bool {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    score > gamma
}

/// Sparsity induced by computing `k` of `rows_per_frame` spatial rows:
/// `1 - k/H`.
pub fn repetition_sparsity(rows_per_frame: usize, k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= rows_per_frame);
    1.0 - k as f64 / rows_per_frame as f64
}
