//! Walks through mask calibration for one attention head: block
//! energies, greedy per-prompt selection, cross-prompt aggregation, and
//! agreement thresholding.
//!
//! Run with: cargo run --example calibrate_masks

use csattn::calibration::{
    aggregate_masks, block_energy, keep_rate_histogram, per_prompt_mask, threshold_mask, CellKey,
};
use csattn::layout::VideoLayout;
use csattn::math::post_softmax_map;
use csattn::workloads::{generate_head, HeadProfile};

fn main() -> csattn::Result<()> {
    let layout = VideoLayout::desk_default();
    let profile = HeadProfile::block_sparse(42);
    let key = CellKey {
        timestep: 0,
        layer: 0,
        head: 0,
    };
    let epsilon = 0.95;

    // Per-prompt masks for a handful of calibration prompts.
    let mut masks = Vec::new();
    for prompt_seed in 0..8 {
        let input = generate_head(&profile, prompt_seed, key, &layout, 16, 4)?;
        let p = post_softmax_map(&input)?;
        if prompt_seed == 0 {
            let energy = block_energy(&p, &layout)?;
            let row = energy.row(0);
            println!("block energies of row 0 (prompt 0):");
            for (c, e) in row.iter().enumerate() {
                if *e > 1e-6 {
                    println!("  block {c:>2}: {e:.4}");
                }
            }
        }
        masks.push(per_prompt_mask(&p, &layout, epsilon)?);
    }

    let agg = aggregate_masks(&masks)?;
    let hist = keep_rate_histogram(&agg, 10)?;
    println!(
        "\nkeep-rate histogram over {} blocks: {hist:?}",
        agg.means().len()
    );
    println!(
        "bimodal fraction (<=0.1 or >=0.9): {:.3}",
        agg.bimodal_fraction(0.1, 0.9)
    );

    let mask = threshold_mask(&agg, 0.5)?;
    let total = mask.num_rows() * mask.num_cols();
    println!(
        "calibrated mask keeps {}/{} blocks (sparsity {:.3})",
        mask.kept_count(),
        total,
        1.0 - mask.kept_count() as f64 / total as f64
    );

    // The calibrated mask recovers the generator's seeded pattern.
    let expected = profile.expected_pattern(&layout, 0, 4).unwrap();
    println!("matches the seeded pattern: {}", mask == expected);
    Ok(())
}
