//! Offline calibration of block-sparse attention masks for video
//! transformers, plus a reference executor that verifies the sparse
//! paths against dense attention.
//!
//! The pipeline mirrors how a calibrated-sparse-attention deployment is
//! built:
//!
//! 1. [`workloads`] generates deterministic synthetic attention heads
//!    (or ingests an external dump) over a (timestep, layer, head) grid.
//! 2. [`calibration`] scores block energies per attention map, keeps the
//!    smallest set of key blocks reaching an energy threshold `eps(t)`,
//!    aggregates the per-prompt masks, and thresholds the agreement into
//!    a mask dictionary.
//! 3. [`repetition`] detects heads whose spatial rows attend identically
//!    and marks them for anchor-row execution instead of masking.
//! 4. [`skiplist`] compiles masks into interval skip lists with per-layer
//!    trimming, optional interval merging, and a flat 1D form.
//! 5. [`sharing`] clusters timesteps with near-identical skipped sets and
//!    stores one OR-merged mask per cluster.
//! 6. [`executor`] runs masked block-sparse attention and anchor-row
//!    attention, accounting sparsity exactly and measuring relative
//!    error against the dense reference in [`math`].
//!
//! The `csattn` binary drives the same steps as subcommands
//! (`gen`, `calibrate`, `compile`, `share`, `run`, `report`); see
//! [`pipeline`]. Each capability also has a runnable example under
//! `examples/`.

pub mod calibration;
pub mod error;
pub mod executor;
pub mod formats;
pub mod layout;
pub mod math;
pub mod pipeline;
pub mod repetition;
pub mod sharing;
pub mod skiplist;
pub mod workloads;

pub use error::{Error, Result};
