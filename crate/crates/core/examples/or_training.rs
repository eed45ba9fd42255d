//! Output-randomization training on the MNIST subset, attacked with PGD
//! under the cross-entropy and the CW margin loss.
//!
//! `cargo run --release --example or_training [MNIST_DIR]`  (about a minute)

use orlab::attacks::{pgd_perturb, PgdParams};
use orlab::harness::Dataset;
use orlab::nn::{train, LossKind, Model, TrainConfig};
use orlab::rng;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist-subset").into());
    let data = Dataset::mnist(&dir)?;
    let pgd = PgdParams { eps: 0.15, step: 0.0375, steps: 10, random_start: true };
    let victims = &data.test[..200];

    for or_sigma in [0.0, 50.0] {
        let cfg = TrainConfig { iterations: 6000, learning_rate: 0.1, or_sigma, seed: 1, ..Default::default() };
        let (model, _) = train(Model::mlp(&[784, 128, 10], 1)?, &data.train, &cfg)?;
        let acc =
            data.test.iter().filter(|e| model.predict(&e.x).unwrap() == e.y).count() as f64 / data.test.len() as f64;
        // Attack gradients in single precision, like a typical framework.
        let attacked = model.cast::<f32>();
        for (name, loss) in [("xent", LossKind::Xent), ("cw", LossKind::Cw { kappa: 0.0 })] {
            let mut robust = 0;
            let mut step5 = 0.0;
            for (i, e) in victims.iter().enumerate() {
                let mut trace = Vec::new();
                let adv =
                    pgd_perturb(&attacked, &e.x, e.y, &pgd, loss, &mut rng::stream(7, &[i as u64]), Some(&mut trace))?;
                robust += (model.predict(&adv)? == e.y) as usize;
                step5 += (trace[5] - trace[0]) / victims.len() as f64;
            }
            println!(
                "or_sigma {or_sigma:>4}: clean acc {acc:.4}  PGD-{name:<4} robust acc {:.3}  loss rise by step 5 {step5:.3}",
                robust as f64 / victims.len() as f64
            );
        }
    }
    Ok(())
}
