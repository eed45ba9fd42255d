//! Noise variance needed for a target pairwise flip rate, three ways.
//!
//! `cargo run --release --example calibrate_noise`

use orlab::defense::{calibrate_variance, calibrate_variance_corrected, calibrate_variance_mc, simulate_flip_rate};
use orlab::rng;

fn main() -> anyhow::Result<()> {
    let trials = 200_000;
    println!("{:>5} {:>5} {:>12} {:>12} {:>12} {:>10}", "delta", "K", "literal", "corrected", "monte_carlo", "check");
    for delta in [0.2, 0.5, 0.8] {
        for k in [0.01, 0.1, 0.2] {
            let literal = calibrate_variance(delta, k)?;
            let corrected = calibrate_variance_corrected(delta, k)?;
            let mc = calibrate_variance_mc(delta, k, trials, &mut rng::stream(1, &[]))?;
            // Fresh draws, so the check is independent of the search.
            let (rate, _) = simulate_flip_rate(delta, mc.sigma2, trials, &mut rng::stream(2, &[]))?;
            println!("{delta:>5} {k:>5} {literal:>12.5} {corrected:>12.5} {:>12.5} {rate:>10.4}", mc.sigma2);
        }
    }
    Ok(())
}
