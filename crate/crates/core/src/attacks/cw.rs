use rand::Rng;
use rand_distr::StandardNormal;

use super::{l2_distance, AttackConfig, AttackError, AttackResult, StopReason, TracePoint};
use crate::nn::{cw_targeted_loss, Injection, Model, NnError, Real};

/// Targeted Carlini-Wagner L2 attack at a fixed distortion weight `c`.
///
/// Minimizes `‖x - x0‖² + c · max(max_{i≠t} z_i - z_t, -κ)` with Adam for
/// `cfg.cw.steps` steps, clipping to `[0, 1]` after each step, and keeps the
/// successful iterate with the smallest l2 distortion. With
/// `cfg.cw.logit_sigma > 0` the attacker differentiates through noisy logits,
/// averaging `cfg.cw.samples` noise draws per step; success is still judged
/// on the clean model.
pub fn cw_l2_attack<T: Real, R: Rng + ?Sized>(
    model: &Model<T>,
    x0: &[f64],
    target: usize,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    if target >= model.num_classes() {
        return Err(NnError::ClassOutOfRange { class: target, num_classes: model.num_classes() }.into());
    }
    let to_t = |x: &[f64]| x.iter().map(|&v| T::of(v)).collect::<Vec<T>>();
    let mut result = AttackResult::new();
    if model.predict(&to_t(x0))? == target {
        result.record_success(x0, x0);
        result.stop_reason = StopReason::Success;
        return Ok(result);
    }

    let cw = &cfg.cw;
    let (beta1, beta2) = (0.9, 0.999);
    let n = x0.len();
    let last_layer = model.layers().len() - 1;
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut noise = vec![T::zero(); model.num_classes()];
    let samples = if cw.logit_sigma > 0.0 { cw.samples } else { 1 };

    for step in 0..cw.steps {
        let xt = to_t(&x);
        let mut grad: Vec<f64> = x.iter().zip(x0).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut adv_loss = 0.0;
        for _ in 0..samples {
            let injection = if cw.logit_sigma > 0.0 {
                for e in noise.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *e = T::of(cw.logit_sigma * z);
                }
                Some(Injection { layer: last_layer, noise: &noise })
            } else {
                None
            };
            let (l, _, g) =
                model.backward_with(&xt, injection, None, true, |z| cw_targeted_loss(z, target, cfg.kappa))?;
            adv_loss += l.as_f64() / samples as f64;
            for (acc, gi) in grad.iter_mut().zip(g.expect("input gradient requested")) {
                *acc += cfg.c * gi.as_f64() / samples as f64;
            }
        }
        let distortion: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();

        let t = (step + 1) as i32;
        for i in 0..n {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - f64::powi(beta1, t));
            let v_hat = v[i] / (1.0 - f64::powi(beta2, t));
            x[i] = (x[i] - cw.learning_rate * m_hat / (v_hat.sqrt() + 1e-8)).clamp(0.0, 1.0);
        }
        if model.predict(&to_t(&x))? == target && l2_distance(&x, x0) < result.best_l2() {
            result.record_success(&x, x0);
        }
        result.loss_trace.push(TracePoint {
            iteration: step,
            queries: (step + 1) as u64,
            loss: distortion + cfg.c * adv_loss,
            best_l2: result.best_l2(),
        });
    }
    result.queries_used = (cw.steps * samples) as u64;
    result.stop_reason = if result.success { StopReason::Success } else { StopReason::Completed };
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AttackFamily, CwParams};
    use crate::nn::{Activation, LayerSpec};
    use crate::rng;

    fn toy() -> Model {
        let layers = vec![LayerSpec::dense(2, 2, Activation::Identity)];
        Model::from_parts(layers, 2, 0, vec![4.0, -4.0, -4.0, 4.0, 0.0, 0.0]).unwrap()
    }

    fn cfg(c: f64) -> AttackConfig {
        AttackConfig {
            family: AttackFamily::CwL2,
            c,
            cw: CwParams { steps: 300, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn zero_weight_stays_put() {
        let r = cw_l2_attack(&toy(), &[0.6, 0.4], 1, &cfg(0.0), &mut rng::stream(0, &[])).unwrap();
        assert!(!r.success);
        assert_eq!(r.adversarial_example, None);
    }

    #[test]
    fn reaches_the_target_with_small_distortion() {
        let m = toy();
        let r = cw_l2_attack(&m, &[0.6, 0.4], 1, &cfg(5.0), &mut rng::stream(0, &[])).unwrap();
        assert!(r.success);
        let adv = r.adversarial_example.unwrap();
        assert_eq!(m.predict(&adv).unwrap(), 1);
        assert!(r.l2.is_finite() && r.l2 < 0.3, "{}", r.l2);
    }

    #[test]
    fn current_prediction_is_immediate() {
        let r = cw_l2_attack(&toy(), &[0.6, 0.4], 0, &cfg(1.0), &mut rng::stream(0, &[])).unwrap();
        assert!(r.success);
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.queries_used, 0);
    }

    #[test]
    fn noisy_logits_still_work_for_a_wide_margin_target() {
        let m = toy();
        let mut c = cfg(5.0);
        c.cw.logit_sigma = 0.5;
        c.cw.samples = 8;
        let r = cw_l2_attack(&m, &[0.6, 0.4], 1, &c, &mut rng::stream(3, &[])).unwrap();
        assert!(r.success);
        assert_eq!(r.queries_used, 300 * 8);
    }
}
