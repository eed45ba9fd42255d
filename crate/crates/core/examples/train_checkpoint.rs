//! Train a small MLP, check its gradients, and round-trip a checkpoint.
//!
//! `cargo run --release --example train_checkpoint`

use orlab::harness::{synth_dataset, SynthSpec};
use orlab::nn::{grad_check, load_checkpoint, save_checkpoint, train, Model, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = synth_dataset(&SynthSpec { classes: 3, dims: 6, separation: 3.0, n: 900, n_test: Some(300) }, 1)?;
    let model = Model::mlp(&[6, 12, 3], 4)?;
    let worst = grad_check(&model, &data.train[0].x, data.train[0].y)?;
    println!("worst relative gradient error before training: {worst:.2e}");

    let (model, log) =
        train(model, &data.train, &TrainConfig { iterations: 800, learning_rate: 0.1, ..Default::default() })?;
    for entry in log.entries.iter().step_by(log.entries.len().div_ceil(5).max(1)) {
        println!("iteration {:>4} loss {:.4}", entry.iteration, entry.loss);
    }
    let acc = data.test.iter().filter(|e| model.predict(&e.x).unwrap() == e.y).count() as f64 / data.test.len() as f64;
    println!("test accuracy {acc:.3}");

    let path = std::env::temp_dir().join("orlab_example.ckpt");
    save_checkpoint(&model, &path)?;
    let back: Model = load_checkpoint(&path)?;
    assert_eq!(back.params(), model.params());
    println!("checkpoint round trip ok: {}", path.display());
    Ok(())
}
