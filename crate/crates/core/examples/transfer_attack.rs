//! Adversarial examples crafted on a substitute model and replayed against
//! an output-randomized target.
//!
//! `cargo run --release --example transfer_attack`

use orlab::attacks::{AttackConfig, AttackFamily, PgdConfig};
use orlab::harness::{synth_dataset, transfer_attack_eval, SynthSpec};
use orlab::nn::{train, Model, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = synth_dataset(&SynthSpec { classes: 4, dims: 20, separation: 4.0, n: 2000, n_test: Some(300) }, 2)?;
    let fit = |or_sigma: f64, seed: u64| {
        let cfg = TrainConfig { iterations: 1500, learning_rate: 0.1, or_sigma, seed, ..Default::default() };
        train(Model::mlp(&[20, 32, 4], seed).unwrap(), &data.train, &cfg).map(|(m, _)| m)
    };
    let target = fit(10.0, 1)?;
    let attack = AttackConfig {
        family: AttackFamily::Pgd,
        pgd: PgdConfig { eps: 0.05, step: 0.05 / 4.0, steps: 10, ..Default::default() },
        ..Default::default()
    };
    for (name, substitute, sigma) in
        [("same model", target.clone(), 10.0), ("noise-free substitute", fit(0.0, 2)?, 0.0)]
    {
        let t = transfer_attack_eval(&target, &substitute, sigma, &data.test, 50, &attack, 5)?;
        println!(
            "{name:<22} fools substitute {:.2}  transfers {:.2}  direct on target {:.2}",
            t.substitute_success_rate, t.transfer_success_rate, t.direct_success_rate
        );
    }
    Ok(())
}
