//! Compiles masks into interval skip lists and walks the storage
//! optimizations: per-layer trimming, interval merging, and the flat 1D
//! form, with exact byte accounting at each step.
//!
//! Run with: cargo run --example skip_lists

use csattn::calibration::{per_prompt_mask, CellKey};
use csattn::layout::VideoLayout;
use csattn::math::post_softmax_map;
use csattn::skiplist::{compile, footprint_2d, merge_intervals, to_flat, trim_layer};
use csattn::workloads::{generate_head, HeadProfile};

fn main() -> csattn::Result<()> {
    let layout = VideoLayout::desk_default();

    // One layer's worth of masks: a few heads across timesteps.
    let mut masks = Vec::new();
    for head in 0..4u64 {
        let profile = HeadProfile::block_sparse(100 + head);
        for t in 0..4 {
            let key = CellKey {
                timestep: t,
                layer: 0,
                head: head as usize,
            };
            let input = generate_head(&profile, 55, key, &layout, 16, 4)?;
            let p = post_softmax_map(&input)?;
            masks.push(per_prompt_mask(&p, &layout, 0.95)?);
        }
    }

    let mut lists: Vec<_> = masks.iter().map(compile).collect::<csattn::Result<_>>()?;
    println!(
        "compiled {} masks at full width {}: {} bytes",
        lists.len(),
        lists[0].width(),
        footprint_2d(&lists)
    );

    let width = trim_layer(&mut lists);
    println!("trimmed to width {width}: {} bytes", footprint_2d(&lists));

    let sample = lists[0].row(0);
    println!("row 0 intervals: {sample:?}");

    let outcome = merge_intervals(&mut lists, 75.0)?;
    println!(
        "merged at percentile 75 (target width {}): {} bytes, {} extra blocks computed",
        outcome.target_width,
        footprint_2d(&lists),
        outcome.extra_blocks
    );

    let flat = to_flat(&lists)?;
    println!(
        "flat form: {} intervals over {} rows: {} bytes",
        flat.total_intervals(),
        flat.total_rows(),
        flat.footprint_bytes()
    );

    // Everything decodes back; merging only ever adds kept blocks.
    for (i, mask) in masks.iter().enumerate() {
        assert!(lists[i].decode()?.is_superset_of(mask));
        assert_eq!(flat.decode_entry(i)?, lists[i].decode()?);
    }
    println!("round-trip checks passed");
    Ok(())
}
