//! ZOO against a small classifier, with and without output noise, and an
//! attacker that averages repeated queries.
//!
//! `cargo run --release --example zoo_black_box`

use orlab::attacks::{zoo_attack, AttackConfig, AttackFamily, Goal};
use orlab::defense::{DefendedModel, NoiseSpec};
use orlab::harness::{synth_dataset, SynthSpec};
use orlab::nn::{train, Model, TrainConfig};
use orlab::rng;

fn main() -> anyhow::Result<()> {
    let spec = SynthSpec { classes: 4, dims: 16, separation: 4.0, n: 2000, n_test: Some(200) };
    let data = synth_dataset(&spec, 3)?;
    let cfg = TrainConfig { iterations: 1500, learning_rate: 0.1, ..Default::default() };
    let (model, _) = train(Model::mlp(&[16, 32, 4], 1)?, &data.train, &cfg)?;

    let victims: Vec<_> = data.test.iter().filter(|e| model.predict(&e.x).unwrap() == e.y).take(10).collect();
    for (sigma2, averaging) in [(0.0, 1), (1e-4, 1), (1e-2, 1), (1e-2, 100)] {
        let attack = AttackConfig { family: AttackFamily::Zoo, max_queries: 5000, averaging, ..Default::default() };
        let mut wins = 0;
        for (i, e) in victims.iter().enumerate() {
            let noise = NoiseSpec::isotropic(4, sigma2)?;
            let mut oracle =
                DefendedModel::new(&model, noise, rng::stream(10, &[i as u64]), attack.effective_max_queries())?;
            let r = zoo_attack(
                &mut oracle,
                &e.x,
                Goal::Untargeted { label: e.y },
                &attack,
                &mut rng::stream(20, &[i as u64]),
            )?;
            // The attacker's claim is confirmed on the noise-free model.
            if let Some(adv) = r.adversarial_example.filter(|_| r.success) {
                wins += (model.predict(&adv)? != e.y) as usize;
            }
        }
        println!("sigma2 {sigma2:<7} averaging {averaging:<4} success {wins}/{}", victims.len());
    }
    Ok(())
}
