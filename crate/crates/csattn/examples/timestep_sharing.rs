//! Clusters timesteps whose masks skip nearly the same blocks and shows
//! the IoU structure that motivates sharing.
//!
//! Run with: cargo run --example timestep_sharing

use csattn::calibration::{per_prompt_mask, CellKey};
use csattn::layout::VideoLayout;
use csattn::math::post_softmax_map;
use csattn::sharing::{cluster_timesteps, skipped_iou};
use csattn::workloads::{generate_head, HeadProfile};

fn main() -> csattn::Result<()> {
    let layout = VideoLayout::desk_default();
    let timesteps = 6;
    // Patterns freeze from the midpoint timestep, mimicking the higher
    // similarity of late denoising steps.
    let profile = HeadProfile::block_sparse(11).with_sigma(0.0);

    let mut masks = Vec::new();
    for t in 0..timesteps {
        let key = CellKey {
            timestep: t,
            layer: 0,
            head: 0,
        };
        let input = generate_head(&profile, 9, key, &layout, 16, timesteps)?;
        let p = post_softmax_map(&input)?;
        masks.push(per_prompt_mask(&p, &layout, 0.95)?);
    }

    println!("pairwise skipped-set IoU:");
    print!("      ");
    for t in 0..timesteps {
        print!("  t{t}  ");
    }
    println!();
    for t1 in 0..timesteps {
        print!("  t{t1} ");
        for t2 in 0..timesteps {
            print!(" {:.3}", skipped_iou(&masks[t1], &masks[t2])?);
        }
        println!();
    }

    let tau = 0.97;
    let column: Vec<(usize, &_)> = masks.iter().enumerate().collect();
    let clusters = cluster_timesteps(&column, tau)?;
    println!("\nclusters at tau = {tau}:");
    for cluster in &clusters {
        let total = cluster.shared.num_rows() * cluster.shared.num_cols();
        println!(
            "  timesteps {:?} share a mask keeping {}/{} blocks",
            cluster.members,
            cluster.shared.kept_count(),
            total
        );
    }
    Ok(())
}
