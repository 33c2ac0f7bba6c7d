//! Scores spatial repetition for different head kinds and shows the
//! anchor-row accuracy/sparsity trade-off on a repetitive head.
//!
//! Run with: cargo run --example repetition_detection

use csattn::calibration::CellKey;
use csattn::executor::anchor_attention;
use csattn::layout::VideoLayout;
use csattn::math::{dense_attention, post_softmax_map, relative_error};
use csattn::repetition::{detect_repetitive, repetition_sparsity, spatial_similarity};
use csattn::workloads::{generate_head, HeadProfile};

fn main() -> csattn::Result<()> {
    let layout = VideoLayout::desk_default();
    let gamma = 0.87;
    let key = CellKey {
        timestep: 0,
        layer: 0,
        head: 0,
    };

    println!("spatial similarity by head kind (gamma = {gamma}):");
    for (name, profile) in [
        (
            "repetitive sigma=0.0",
            HeadProfile::repetitive(5).with_sigma(0.0),
        ),
        ("repetitive sigma=0.5", HeadProfile::repetitive(5)),
        ("block-sparse", HeadProfile::block_sparse(5)),
        ("dense-noise", HeadProfile::dense_noise(5)),
    ] {
        let input = generate_head(&profile, 77, key, &layout, 16, 4)?;
        let p = post_softmax_map(&input)?;
        let s = spatial_similarity(&p, &layout, 5)?;
        println!(
            "  {name:<22} s = {s:.4} -> {}",
            if detect_repetitive(s, gamma) {
                "repetitive"
            } else {
                "masked"
            }
        );
    }

    println!("\nanchor-row attention on a noise-free repetitive head:");
    let profile = HeadProfile::repetitive(9).with_sigma(0.0);
    let input = generate_head(&profile, 3, key, &layout, 16, 4)?;
    let dense = dense_attention(&input)?;
    for k in [1, 2, 5, layout.rows_per_frame] {
        let out = anchor_attention(&input, &layout, k)?;
        println!(
            "  k = {k}: sparsity {:.3}, error {:.2e}",
            repetition_sparsity(layout.rows_per_frame, k),
            relative_error(&out, &dense)?
        );
    }
    Ok(())
}
