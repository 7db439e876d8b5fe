//! Prints a few rows of every preset's metric curve for one seed.
//!
//! ```text
//! cargo run --release -p grae-core --example preset_curves -- [seed] [eta]
//! ```

use grae_core::presets::{preset, PRESET_NAMES};
use grae_core::trainer::run_experiment;

fn main() -> grae_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let eta: Option<f64> = args.next().and_then(|s| s.parse().ok());
    for name in PRESET_NAMES {
        let mut cfg = preset(name)?;
        cfg.seed = seed;
        if let Some(eta) = eta {
            cfg.eta = eta;
        }
        let res = run_experiment(&cfg)?;
        println!("{name} (collapse at {:?})", res.collapse_step);
        println!("  step  omega   entropy  correct  unsolved  greedy");
        for m in res.metrics.iter().filter(|m| m.step == 1 || m.step % 50 == 0) {
            println!(
                "  {:>4}  {:.3}  {:>7.4}  {:>7}  {:>8}  {:.3}",
                m.step, m.omega_s, m.mean_entropy, m.correct_count, m.unsolved_count, m.greedy_accuracy
            );
        }
    }
    Ok(())
}
