use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Injection, LabeledExample, LossKind, Model, NnError};
use crate::attacks::pgd::{pgd_perturb, PgdParams};
use crate::rng;

/// Where training-time noise is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSite {
    /// Pre-softmax output.
    #[default]
    Logits,
    /// Output of hidden layer `k` (0-based), after its activation.
    AfterHidden(usize),
}

/// PGD adversarial-training parameters (l-infinity ball).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvTrainConfig {
    pub eps: f64,
    pub step: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Standard deviation of the zero-mean Gaussian noise added at
    /// `noise_site` during training; zero disables it.
    pub or_sigma: f64,
    pub adv_train: Option<AdvTrainConfig>,
    pub noise_site: NoiseSite,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 64,
            learning_rate: 0.05,
            or_sigma: 0.0,
            adv_train: None,
            noise_site: NoiseSite::Logits,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if self.iterations == 0 || self.batch_size == 0 {
            return bad("iterations and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.or_sigma >= 0.0 && self.or_sigma.is_finite()) {
            return bad("or_sigma must be nonnegative");
        }
        if let Some(adv) = &self.adv_train {
            if !(adv.eps > 0.0) || !(adv.step > 0.0) || adv.steps == 0 {
                return bad("adv_train needs eps > 0, step > 0 and steps > 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: usize,
    /// Mean minibatch loss of the objective actually optimized (noise and
    /// adversarial examples included).
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

/// Minibatch SGD with a constant learning rate.
///
/// Minibatches are drawn from per-epoch shuffles. When `or_sigma > 0`,
/// every forward pass gets fresh `N(0, or_sigma^2)` noise at `noise_site`;
/// when `adv_train` is set, each batch is first replaced by PGD(Xent)
/// adversarial examples against the current parameters. Shuffling, noise
/// and PGD starts come from separate streams of `cfg.seed`, so a zero
/// `or_sigma` run is bit-identical to plain SGD.
pub fn train(mut model: Model, data: &[LabeledExample], cfg: &TrainConfig) -> Result<(Model, TrainLog), NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::InvalidConfig("empty training set".into()));
    }
    let num_layers = model.layers().len();
    let noise_layer = match cfg.noise_site {
        NoiseSite::Logits => num_layers - 1,
        NoiseSite::AfterHidden(k) if k + 1 < num_layers => k,
        NoiseSite::AfterHidden(k) => {
            return Err(NnError::InvalidConfig(format!("no hidden layer {k} in a {num_layers}-layer model")))
        }
    };
    let noise_len = model.layers()[noise_layer].output_len();

    let mut shuffle_rng = rng::stream(cfg.seed, &[rng::tags::SHUFFLE]);
    let mut noise_rng = rng::stream(cfg.seed, &[rng::tags::TRAIN_NOISE]);
    let mut adv_rng = rng::stream(cfg.seed, &[rng::tags::ADV_TRAIN]);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0;

    let mut grads = vec![0.0; model.params().len()];
    let mut noise = vec![0.0; noise_len];
    let mut log = TrainLog::default();

    for iteration in 0..cfg.iterations {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            let ex = &data[order[cursor]];
            cursor += 1;

            let adv_x;
            let x: &[f64] = match &cfg.adv_train {
                Some(adv) => {
                    let params = PgdParams { eps: adv.eps, step: adv.step, steps: adv.steps, random_start: true };
                    adv_x = pgd_perturb(&model, &ex.x, ex.y, &params, LossKind::Xent, &mut adv_rng, None)?;
                    &adv_x
                }
                None => &ex.x,
            };

            let injection = if cfg.or_sigma > 0.0 {
                for e in noise.iter_mut() {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    *e = cfg.or_sigma * z;
                }
                Some(Injection { layer: noise_layer, noise: &noise })
            } else {
                None
            };
            let (loss, _, _) =
                model.backward_with(x, injection, Some(&mut grads), false, |z| LossKind::Xent.eval(z, ex.y))?;
            batch_loss += loss;
        }
        let mean_loss = batch_loss / cfg.batch_size as f64;
        if !mean_loss.is_finite() {
            return Err(NnError::Divergence { iteration, loss: mean_loss });
        }
        let scale = cfg.learning_rate / cfg.batch_size as f64;
        for (p, g) in model.params_mut().iter_mut().zip(&grads) {
            *p -= scale * g;
        }
        log.entries.push(TrainLogEntry { iteration, loss: mean_loss });
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn blobs(n: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = i % 2;
                let c = if y == 0 { 0.3 } else { 0.7 };
                let x = (0..2)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        (c + 0.05 * z).clamp(0.0, 1.0)
                    })
                    .collect();
                LabeledExample { x, y }
            })
            .collect()
    }

    fn accuracy(model: &Model, data: &[LabeledExample]) -> f64 {
        data.iter().filter(|e| model.predict(&e.x).unwrap() == e.y).count() as f64 / data.len() as f64
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(400, 1);
        let model = Model::mlp(&[2, 16, 2], 3).unwrap();
        let cfg = TrainConfig { iterations: 400, learning_rate: 0.5, seed: 5, ..Default::default() };
        let (model, log) = train(model, &data, &cfg).unwrap();
        assert!(accuracy(&model, &data) >= 0.99);
        assert_eq!(log.entries.len(), 400);
        assert!(log.entries.last().unwrap().loss < log.entries[0].loss);
    }

    #[test]
    fn zero_sigma_is_plain_sgd_bit_for_bit() {
        let data = blobs(100, 2);
        let model = Model::mlp(&[2, 8, 2], 4).unwrap();
        let cfg = TrainConfig { iterations: 30, batch_size: 8, learning_rate: 0.3, seed: 9, ..Default::default() };
        let (a, _) = train(model.clone(), &data, &cfg).unwrap();
        let hidden = TrainConfig { noise_site: NoiseSite::AfterHidden(0), ..cfg.clone() };
        let (b, _) = train(model.clone(), &data, &hidden).unwrap();
        assert_eq!(a.params(), b.params());

        // hand-written SGD over the same batch order
        let mut reference = model.clone();
        let mut shuffle_rng = rng::stream(cfg.seed, &[rng::tags::SHUFFLE]);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut cursor = 0;
        for _ in 0..cfg.iterations {
            let mut g = vec![0.0; reference.params().len()];
            for _ in 0..cfg.batch_size {
                if cursor == order.len() {
                    order.shuffle(&mut shuffle_rng);
                    cursor = 0;
                }
                let ex = &data[order[cursor]];
                cursor += 1;
                let grads = reference.backward(&ex.x, ex.y, LossKind::Xent, None).unwrap();
                for (gi, pi) in g.iter_mut().zip(&grads.params) {
                    *gi += pi;
                }
            }
            let scale = cfg.learning_rate / cfg.batch_size as f64;
            for (p, gi) in reference.params_mut().iter_mut().zip(&g) {
                *p -= scale * gi;
            }
        }
        assert_eq!(a.params(), reference.params());
    }

    #[test]
    fn noise_changes_the_run_but_stays_deterministic() {
        let data = blobs(100, 3);
        let model = Model::mlp(&[2, 8, 2], 4).unwrap();
        let cfg = TrainConfig { iterations: 20, batch_size: 8, or_sigma: 1.0, seed: 1, ..Default::default() };
        let (a, _) = train(model.clone(), &data, &cfg).unwrap();
        let (b, _) = train(model.clone(), &data, &cfg).unwrap();
        let (c, _) = train(model, &data, &TrainConfig { or_sigma: 0.0, ..cfg }).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn rejects_bad_configs() {
        let data = blobs(10, 3);
        let model = Model::mlp(&[2, 4, 2], 1).unwrap();
        let bad_sigma = TrainConfig { or_sigma: -1.0, ..Default::default() };
        assert!(train(model.clone(), &data, &bad_sigma).is_err());
        let bad_adv =
            TrainConfig { adv_train: Some(AdvTrainConfig { eps: 0.0, step: 0.1, steps: 1 }), ..Default::default() };
        assert!(train(model.clone(), &data, &bad_adv).is_err());
        let bad_site = TrainConfig { noise_site: NoiseSite::AfterHidden(1), or_sigma: 1.0, ..Default::default() };
        assert!(train(model.clone(), &data, &bad_site).is_err());
        assert!(train(model, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs(20, 4);
        let model = Model::mlp(&[2, 4, 2], 1).unwrap();
        let cfg = TrainConfig { iterations: 50, learning_rate: 1e308, ..Default::default() };
        assert!(matches!(train(model, &data, &cfg), Err(NnError::Divergence { .. } | NnError::NonFinite(_))));
    }
}
