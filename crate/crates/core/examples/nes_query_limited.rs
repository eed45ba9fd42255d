//! NES gradient estimation and the query-limited attack built on it.
//!
//! `cargo run --release --example nes_query_limited`

use orlab::attacks::{nes_gradient, ql_attack, AttackConfig, AttackFamily, Goal, NesParams};
use orlab::defense::{DefendedModel, NoiseSpec};
use orlab::harness::{synth_dataset, SynthSpec};
use orlab::nn::{train, Model, TrainConfig};
use orlab::rng;
use rand::Rng;

fn main() -> anyhow::Result<()> {
    // Estimator alone: a linear loss has gradient `w` everywhere.
    let mut r = rng::stream(1, &[]);
    let w: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
    let loss = |x: &[f64]| Ok::<_, std::convert::Infallible>(x.iter().zip(&w).map(|(a, b)| a * b).sum());
    let x = vec![0.5; 50];
    for m in [100, 1_000, 10_000] {
        let est = nes_gradient(loss, &x, 0.01, m, &mut rng::stream(2, &[m as u64]))?;
        let err: f64 = est.values.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("m = {m:>6}: relative l2 error {:.4}", err / norm);
    }

    let data = synth_dataset(&SynthSpec { classes: 3, dims: 10, separation: 4.0, n: 1500, n_test: Some(100) }, 5)?;
    let (model, _) =
        train(Model::mlp(&[10, 24, 3], 1)?, &data.train, &TrainConfig { learning_rate: 0.1, ..Default::default() })?;
    let nes = NesParams { samples: 20, step: 0.05, eps: 0.5, search_sigma: 0.01 };
    let attack = AttackConfig { family: AttackFamily::QlNes, max_queries: 4000, nes, ..Default::default() };
    for sigma2 in [0.0, 1e-2] {
        let mut wins = 0;
        let victims = data.test.iter().filter(|e| model.predict(&e.x).unwrap() == e.y).take(10);
        for (i, e) in victims.enumerate() {
            let mut oracle =
                DefendedModel::new(&model, NoiseSpec::isotropic(3, sigma2)?, rng::stream(3, &[i as u64]), 4000)?;
            let res = ql_attack(
                &mut oracle,
                &e.x,
                Goal::Untargeted { label: e.y },
                &attack,
                &mut rng::stream(4, &[i as u64]),
            )?;
            wins += res.adversarial_example.filter(|_| res.success).is_some_and(|a| model.predict(&a).unwrap() != e.y)
                as usize;
        }
        println!("sigma2 {sigma2}: QL success {wins}/10");
    }
    Ok(())
}
