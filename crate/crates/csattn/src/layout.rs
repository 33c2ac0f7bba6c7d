//! Video token geometry and block partitioning.
//!
//! Tokens are laid out row-major: frame, then spatial row, then column.
//! The attention sequence of length `N = F*H*W` is partitioned into query
//! blocks of size `B_q` and key/value blocks of size `B_kv`; the final
//! block of each kind may be ragged.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Token geometry of a video attention sequence plus its block partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoLayout {
    /// Frame count `F`.
    pub frames: usize,
    /// Spatial rows per frame `H`.
    pub rows_per_frame: usize,
    /// Tokens per spatial row `W`.
    pub row_width: usize,
    /// Query block size `B_q`.
    pub query_block: usize,
    /// Key/value block size `B_kv`.
    pub key_block: usize,
}

impl VideoLayout {
    pub fn new(
        frames: usize,
        rows_per_frame: usize,
        row_width: usize,
        query_block: usize,
        key_block: usize,
    ) -> Result<Self> {
        if frames == 0 || rows_per_frame == 0 || row_width == 0 {
            return Err(Error::invalid("layout dimensions must be at least 1"));
        }
        if query_block == 0 || key_block == 0 {
            return Err(Error::invalid("block sizes must be at least 1"));
        }
        Ok(VideoLayout {
            frames,
            rows_per_frame,
            row_width,
            query_block,
            key_block,
        })
    }

    /// The default desk-scale geometry: 4 frames of 8x8 tokens (N=256)
    /// with 16x16 blocks, so blocks divide the sequence evenly.
    pub fn desk_default() -> Self {
        VideoLayout::new(4, 8, 8, 16, 16).unwrap()
    }

    /// A geometry whose sequence length (N=250) is not divisible by the
    /// block size, exercising ragged final blocks.
    pub fn desk_ragged() -> Self {
        VideoLayout::new(2, 5, 25, 16, 16).unwrap()
    }

    /// Total token count `N = F*H*W`.
    pub fn seq_len(&self) -> usize {
        self.frames * self.rows_per_frame * self.row_width
    }

    /// Number of query block-rows `ceil(N / B_q)`.
    pub fn num_query_blocks(&self) -> usize {
        self.seq_len().div_ceil(self.query_block)
    }

    /// Number of key block-columns `ceil(N / B_kv)`.
    pub fn num_key_blocks(&self) -> usize {
        self.seq_len().div_ceil(self.key_block)
    }

    /// Flat token index of (frame, spatial row, column).
    pub fn token_index(&self, frame: usize, row: usize, col: usize) -> Result<usize> {
        if frame >= self.frames || row >= self.rows_per_frame || col >= self.row_width {
            return Err(Error::invalid(format!(
                "coordinate ({frame},{row},{col}) out of range"
            )));
        }
        Ok(frame * self.rows_per_frame * self.row_width + row * self.row_width + col)
    }

    /// Token range of query block-row `r` (half-open; last block may be
    /// ragged).
    pub fn query_block_indices(&self, r: usize) -> Result<Range<usize>> {
        if r >= self.num_query_blocks() {
            return Err(Error::invalid(format!("query block {r} out of range")));
        }
        let start = r * self.query_block;
        Ok(start..((start + self.query_block).min(self.seq_len())))
    }

    /// Token range of key block-column `c`.
    pub fn key_block_indices(&self, c: usize) -> Result<Range<usize>> {
        if c >= self.num_key_blocks() {
            return Err(Error::invalid(format!("key block {c} out of range")));
        }
        let start = c * self.key_block;
        Ok(start..((start + self.key_block).min(self.seq_len())))
    }

    /// Token range of spatial row `i` in frame `f`.
    pub fn spatial_row_indices(&self, frame: usize, row: usize) -> Result<Range<usize>> {
        let start = self.token_index(frame, row, 0)?;
        Ok(start..start + self.row_width)
    }

    /// Query block-row containing token `i`.
    pub fn query_block_of(&self, token: usize) -> usize {
        token / self.query_block
    }

    /// Key block-column containing token `j`.
    pub fn key_block_of(&self, token: usize) -> usize {
        token / self.key_block
    }
}

/// A (query block-row, key block-column) coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub row: usize,
    pub col: usize,
}

/// Centered equispaced anchor placement: `a_m = floor((2m+1)*H / (2k))`
/// for `m = 0..k-1`. Strictly increasing; minimizes the worst-case
/// distance from any row to its nearest anchor.
pub fn anchor_rows(rows_per_frame: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > rows_per_frame {
        return Err(Error::invalid(format!(
            "anchor count {k} must be in 1..={rows_per_frame}"
        )));
    }
    Ok((0..k)
        .map(|m| (2 * m + 1) * rows_per_frame / (2 * k))
        .collect())
}

/// Index into `anchors` of the anchor nearest to `row`; equidistant ties
/// resolve to the lower-index anchor. `anchors` must be non-empty and
/// sorted ascending.
pub fn nearest_anchor(row: usize, anchors: &[usize]) -> usize {
    debug_assert!(!anchors.is_empty());
    let mut best = 0;
    let mut best_dist = anchors[0].abs_diff(row);
    for (m, &a) in anchors.iter().enumerate().skip(1) {
        let dist = a.abs_diff(row);
        if dist < best_dist {
            best = m;
            best_dist = dist;
        }
    }
    best
}
