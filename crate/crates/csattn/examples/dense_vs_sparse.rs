//! Compares masked block-sparse execution against dense attention on
//! heads with and without block structure.
//!
//! Run with: cargo run --example dense_vs_sparse

use csattn::calibration::{per_prompt_mask, BlockMask, CellKey};
use csattn::executor::{sparse_attention, sparsity_of_cell};
use csattn::layout::VideoLayout;
use csattn::math::{dense_attention, post_softmax_map, relative_error};
use csattn::workloads::{generate_head, HeadProfile};

fn main() -> csattn::Result<()> {
    let layout = VideoLayout::desk_default();
    let key = CellKey {
        timestep: 0,
        layer: 0,
        head: 0,
    };

    for (name, profile) in [
        (
            "block-structured",
            HeadProfile::block_sparse(7).with_sigma(0.0),
        ),
        ("dense-noise", HeadProfile::dense_noise(7)),
    ] {
        let input = generate_head(&profile, 123, key, &layout, 16, 4)?;
        let dense = dense_attention(&input)?;

        // All-ones mask: no skipping, identical output.
        let ones = BlockMask::all_ones(layout);
        let same = sparse_attention(&input, &ones)?;
        println!(
            "{name}: all-ones mask error = {:.2e}",
            relative_error(&same, &dense)?
        );

        // Calibrated mask at a 0.95 energy threshold.
        let p = post_softmax_map(&input)?;
        let mask = per_prompt_mask(&p, &layout, 0.95)?;
        let sparse = sparse_attention(&input, &mask)?;
        let entry = csattn::calibration::DictEntry::Mask(mask);
        println!(
            "{name}: calibrated mask sparsity = {:.3}, error = {:.2e}",
            sparsity_of_cell(&entry, &layout),
            relative_error(&sparse, &dense)?
        );
    }
    Ok(())
}
