//! Final mean entropy of the group-level presets over a range of seeds.
//!
//! ```text
//! cargo run --release -p grae-core --example entropy_sweep -- [seeds] [eta]
//! ```

use grae_core::presets::preset;
use grae_core::trainer::run_experiment;

fn main() -> grae_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let eta: Option<f64> = args.next().and_then(|s| s.parse().ok());

    let names = ["negative-dominant", "grpo", "positive-dominant"];
    let mut ordered = 0;
    println!("seed,{}", names.join(","));
    for seed in 0..seeds {
        let mut finals = Vec::new();
        for name in names {
            let mut cfg = preset(name)?;
            cfg.seed = seed;
            if let Some(eta) = eta {
                cfg.eta = eta;
            }
            let res = run_experiment(&cfg)?;
            finals.push(res.metrics.last().map_or(0.0, |m| m.mean_entropy));
        }
        if finals[0] > finals[1] && finals[1] > finals[2] {
            ordered += 1;
        }
        println!("{seed},{:.4},{:.4},{:.4}", finals[0], finals[1], finals[2]);
    }
    println!("ordered in {ordered}/{seeds} seeds");
    Ok(())
}
