//! How output noise corrupts finite-difference gradients of the ZOO loss.
//!
//! `cargo run --release --example fd_gradient_error`

use orlab::analysis::expected_fd_error_approx;
use orlab::attacks::{fd_gradient, zoo_untargeted_loss, AveragedOracle};
use orlab::defense::{DefendedModel, NoiseSpec, Oracle};
use orlab::harness::{synth_dataset, SynthSpec};
use orlab::nn::{train, Model, TrainConfig};
use orlab::rng;

fn main() -> anyhow::Result<()> {
    let data = synth_dataset(&SynthSpec { classes: 3, dims: 100, separation: 3.0, n: 1500, n_test: Some(50) }, 9)?;
    let (model, _) =
        train(Model::mlp(&[100, 32, 3], 1)?, &data.train, &TrainConfig { learning_rate: 0.1, ..Default::default() })?;
    let e = &data.test[0];
    let h = 1e-2;
    let probs = |x: &[f64]| {
        let z = model.forward_f64(x).unwrap();
        orlab::nn::softmax(&z).unwrap()
    };

    for (sigma2, k) in [(1e-4, 1), (1e-2, 1), (1e-1, 1), (1e-2, 100)] {
        let noise = NoiseSpec::isotropic(3, sigma2)?;
        let oracle = DefendedModel::new(&model, noise, rng::stream(4, &[k as u64]), u64::MAX)?;
        let mut oracle = AveragedOracle::new(oracle, k);
        let (mut observed, mut predicted) = (0.0, 0.0);
        for i in 0..100 {
            let truth = fd_gradient(
                |x: &[f64]| zoo_untargeted_loss(&probs(x), e.y, f64::INFINITY).map(|l| l.value),
                &e.x,
                i,
                h,
            )?;
            let noisy = fd_gradient(
                |x: &[f64]| {
                    let out = oracle.query(x)?;
                    Ok::<_, anyhow::Error>(zoo_untargeted_loss(&out, e.y, f64::INFINITY)?.value)
                },
                &e.x,
                i,
                h,
            )?;
            observed += (noisy - truth).abs() / 100.0;

            let mut plus = e.x.clone();
            plus[i] += h;
            let mut minus = e.x.clone();
            minus[i] -= h;
            let (pp, pm) = (probs(&plus), probs(&minus));
            let o = |p: &[f64]| (0..3).filter(|&j| j != e.y).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            predicted +=
                expected_fd_error_approx(pp[e.y], pp[o(&pp)], pm[e.y], pm[o(&pm)], sigma2 / k as f64, h)? / 100.0;
        }
        println!(
            "sigma2 {sigma2:<7} k {k:<4} mean |g - gamma| {observed:>10.4}  approx. |E[g - gamma]| {predicted:>10.4}"
        );
    }
    Ok(())
}
