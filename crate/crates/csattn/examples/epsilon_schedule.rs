//! Prints the energy-threshold schedule for the two shipped regimes:
//! the 50-step schedule whose base level follows the sequence length,
//! and the 4-step distilled schedule with fixed parameters.
//!
//! Run with: cargo run --example epsilon_schedule

use csattn::calibration::EpsilonSchedule;

fn main() {
    let n = 32760; // 21 frames of 30x52 tokens

    let high = EpsilonSchedule::high_step(50);
    println!(
        "high-step schedule, N = {n} (base level {:.6}):",
        high.base_level(n)
    );
    for t in [0, 1, 5, 10, 20, 30, 49] {
        println!("  eps({t:>2}) = {:.6}", high.epsilon_at(t, n).unwrap());
    }

    let distilled = EpsilonSchedule::distilled(4);
    println!("\ndistilled 4-step schedule:");
    for t in 0..4 {
        println!("  eps({t}) = {:.6}", distilled.epsilon_at(t, n).unwrap());
    }
}
