use rand::Rng;

use super::{l2_distance, AttackConfig, AttackError, AttackResult, Precision, StopReason, TracePoint};
use crate::nn::{LossKind, Model, NnError, Real};

pub use super::config::PgdParams;

/// Projects onto `{‖x - x0‖∞ ≤ eps} ∩ [0, 1]ⁿ`.
pub fn project_linf_box(x: &mut [f64], x0: &[f64], eps: f64) {
    for (v, &o) in x.iter_mut().zip(x0) {
        *v = v.clamp(o - eps, o + eps).clamp(0.0, 1.0);
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss and input gradient at `x`, computed in the model's precision.
fn loss_and_grad<T: Real>(model: &Model<T>, x: &[f64], y: usize, loss: LossKind) -> Result<(f64, Vec<f64>), NnError> {
    let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
    let (l, _, g) = model.backward_with(&xt, None, None, true, |z| loss.eval(z, y))?;
    let g = g.expect("input gradient requested");
    Ok((l.as_f64(), g.into_iter().map(Real::as_f64).collect()))
}

/// l∞ PGD ascent on `loss` from `x0`: `x ← Π(x + step · sign(∇x loss))`.
///
/// With `random_start` the first iterate is uniform in the ε-ball (then
/// projected). When `trace` is given it receives the loss at every iterate,
/// `steps + 1` values. Gradients are taken in the model's precision `T`; a
/// gradient that underflows to exactly zero leaves its coordinate unmoved.
pub fn pgd_perturb<T: Real, R: Rng + ?Sized>(
    model: &Model<T>,
    x0: &[f64],
    y: usize,
    params: &PgdParams,
    loss: LossKind,
    rng: &mut R,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec<f64>, NnError> {
    if x0.len() != model.input_len() {
        return Err(NnError::DimensionMismatch { what: "input", expected: model.input_len(), got: x0.len() });
    }
    let mut x = x0.to_vec();
    if params.random_start && params.eps > 0.0 {
        for v in x.iter_mut() {
            *v += rng.random_range(-params.eps..=params.eps);
        }
        project_linf_box(&mut x, x0, params.eps);
    }
    for _ in 0..params.steps {
        let (l, g) = loss_and_grad(model, &x, y, loss)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(l);
        }
        for (v, gi) in x.iter_mut().zip(&g) {
            *v += params.step * sign(*gi);
        }
        project_linf_box(&mut x, x0, params.eps);
    }
    if let Some(t) = trace {
        let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
        let logits = model.forward(&xt)?;
        t.push(loss.eval(&logits, y)?.0.as_f64());
    }
    Ok(x)
}

/// Untargeted white-box PGD with `cfg.pgd`, in the precision of `model`.
/// Success iff the final iterate is misclassified.
pub fn pgd_attack<T: Real, R: Rng + ?Sized>(
    model: &Model<T>,
    x0: &[f64],
    y: usize,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let params = cfg.pgd.params();
    let mut losses = Vec::with_capacity(params.steps + 1);
    let x = pgd_perturb(model, x0, y, &params, cfg.pgd.loss, rng, Some(&mut losses))?;
    let mut result = AttackResult::new();
    let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
    if model.predict(&xt)? != y {
        result.record_success(&x, x0);
    }
    let last = losses.len() - 1;
    result.loss_trace = losses
        .into_iter()
        .enumerate()
        .map(|(i, loss)| TracePoint {
            iteration: i,
            queries: i as u64,
            loss,
            best_l2: if i == last { result.best_l2() } else { f64::INFINITY },
        })
        .collect();
    result.queries_used = params.steps as u64;
    result.stop_reason = if result.success { StopReason::Success } else { StopReason::Completed };
    debug_assert!(!result.success || l2_distance(&x, x0) == result.l2);
    Ok(result)
}

/// [`pgd_attack`] after casting an `f64` model to `cfg.pgd.precision`.
/// Prefer casting once and calling [`pgd_attack`] when attacking many inputs.
pub fn pgd_attack_at_precision<R: Rng + ?Sized>(
    model: &Model,
    x0: &[f64],
    y: usize,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult, AttackError> {
    match cfg.pgd.precision {
        Precision::F64 => pgd_attack(model, x0, y, cfg, rng),
        Precision::F32 => pgd_attack(&model.cast::<f32>(), x0, y, cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AttackFamily, PgdConfig};
    use crate::nn::{Activation, LayerSpec};
    use crate::rng;

    fn scalar_model(slope: f64) -> Model {
        // logits [0, slope * x]: class-0 cross-entropy grows with x when slope > 0
        let layers = vec![LayerSpec::dense(1, 2, Activation::Identity)];
        Model::from_parts(layers, 2, 0, vec![0.0, slope, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn single_step_clips_to_ball() {
        let m = scalar_model(1.0);
        let p = PgdParams { eps: 0.05, step: 0.1, steps: 1, random_start: false };
        let x = pgd_perturb(&m, &[0.5], 0, &p, LossKind::Xent, &mut rng::stream(0, &[]), None).unwrap();
        assert!((x[0] - 0.55).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_returns_the_input() {
        let m = scalar_model(1.0);
        let cfg = AttackConfig {
            family: AttackFamily::Pgd,
            pgd: PgdConfig { eps: 0.0, ..Default::default() },
            ..Default::default()
        };
        let r = pgd_attack(&m, &[0.2], 1, &cfg, &mut rng::stream(0, &[])).unwrap();
        assert!(!r.success);
        assert_eq!(r.loss_trace.len(), cfg.pgd.steps + 1);
        let x = pgd_perturb(&m, &[0.2], 1, &cfg.pgd.params(), LossKind::Xent, &mut rng::stream(0, &[]), None).unwrap();
        assert_eq!(x, vec![0.2]);
    }

    #[test]
    fn iterates_respect_ball_and_box() {
        let m = Model::<f64>::mlp(&[6, 8, 3], 4).unwrap();
        let x0 = [0.0, 1.0, 0.5, 0.02, 0.98, 0.3];
        let p = PgdParams { eps: 0.1, step: 0.03, steps: 20, random_start: true };
        for seed in 0..10 {
            let x =
                pgd_perturb(&m, &x0, 1, &p, LossKind::Cw { kappa: 0.0 }, &mut rng::stream(seed, &[]), None).unwrap();
            for (v, o) in x.iter().zip(&x0) {
                assert!((0.0..=1.0).contains(v));
                assert!((v - o).abs() <= 0.1 + 1e-12);
            }
        }
    }

    #[test]
    fn flips_a_linear_decision() {
        // logits [x, 0.5]: class 0 iff x > 0.5
        let layers = vec![LayerSpec::dense(1, 2, Activation::Identity)];
        let m = Model::from_parts(layers, 2, 0, vec![1.0, 0.0, 0.0, 0.5]).unwrap();
        let cfg = AttackConfig {
            family: AttackFamily::Pgd,
            pgd: PgdConfig { eps: 0.2, step: 0.05, steps: 10, ..Default::default() },
            ..Default::default()
        };
        let r = pgd_attack_at_precision(&m, &[0.6], 0, &cfg, &mut rng::stream(1, &[])).unwrap();
        assert!(r.success);
        assert!(r.linf <= 0.2 + 1e-12);
        let trace: Vec<f64> = r.loss_trace.iter().map(|t| t.loss).collect();
        assert!(trace.last().unwrap() > &trace[0]);
    }

    #[test]
    fn underflowed_gradient_does_not_move() {
        // logits [200, -0.5]: the runner-up probability underflows in f32, not f64
        let layers = vec![LayerSpec::dense(1, 2, Activation::Identity)];
        let m = Model::from_parts(layers, 2, 0, vec![400.0, -1.0, 0.0, 0.0]).unwrap();
        let p = PgdParams { eps: 0.1, step: 0.05, steps: 3, random_start: false };
        let x32 = pgd_perturb(&m.cast::<f32>(), &[0.5], 0, &p, LossKind::Xent, &mut rng::stream(0, &[]), None).unwrap();
        assert_eq!(x32, vec![0.5]);
        let x64 = pgd_perturb(&m, &[0.5], 0, &p, LossKind::Xent, &mut rng::stream(0, &[]), None).unwrap();
        assert!(x64[0] < 0.5);
        let cw =
            pgd_perturb(&m.cast::<f32>(), &[0.5], 0, &p, LossKind::Cw { kappa: 0.0 }, &mut rng::stream(0, &[]), None)
                .unwrap();
        assert!(cw[0] < 0.5);
    }
}
