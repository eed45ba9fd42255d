use rand::Rng;

use super::pgd::{project_linf_box, sign};
use super::zoo::{goal_loss, Budget};
use super::{nes_gradient, AttackConfig, AttackError, AttackResult, AveragedOracle, Goal, StopReason, TracePoint};
use crate::defense::{Oracle, QueryError};
use crate::nn::argmax;

/// Query-limited attack: NES gradient of the ZOO margin loss, then a signed
/// descent step `x ← Π(x - η · sign(g))` onto the l∞ ball of radius
/// `cfg.nes.eps` around `x0` intersected with `[0, 1]ⁿ`. One extra query per
/// iteration checks the new iterate; the attack stops when that observed
/// output reaches the goal or the budget cannot pay for another iteration.
pub fn ql_attack<R: Rng + ?Sized>(
    oracle: &mut dyn Oracle,
    x0: &[f64],
    goal: Goal,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let budget = Budget::new(oracle, cfg);
    let mut oracle = AveragedOracle::new(oracle, cfg.averaging);
    let k = cfg.averaging as u64;
    let nes = &cfg.nes;
    let per_iteration = (2 * nes.samples as u64 + 1) * k;

    let mut result = AttackResult::new();
    let mut x = x0.to_vec();
    let mut iteration = 0;
    let outcome: Result<StopReason, AttackError> = (|| loop {
        if !budget.allows(oracle.inner(), per_iteration) {
            return Ok(StopReason::BudgetExhausted);
        }
        let mut clamped = false;
        let est = nes_gradient(
            |p: &[f64]| {
                let out = oracle.query(p)?;
                let l = goal_loss(&out, goal, cfg.kappa)?;
                clamped |= l.clamped;
                Ok::<_, AttackError>(l.value)
            },
            &x,
            nes.search_sigma,
            nes.samples,
            rng,
        )?;
        result.clamped |= clamped;
        for (v, g) in x.iter_mut().zip(&est.values) {
            *v -= nes.step * sign(*g);
        }
        project_linf_box(&mut x, x0, nes.eps);

        let out = oracle.query(&x)?;
        let loss = goal_loss(&out, goal, cfg.kappa)?;
        result.clamped |= loss.clamped;
        if goal.reached(argmax(&out)) {
            result.record_success(&x, x0);
        }
        result.loss_trace.push(TracePoint {
            iteration,
            queries: budget.used(oracle.inner()),
            loss: loss.value,
            best_l2: result.best_l2(),
        });
        iteration += 1;
        if result.success {
            return Ok(StopReason::Success);
        }
    })();
    result.stop_reason = match outcome {
        Ok(r) => r,
        Err(AttackError::Query(QueryError::BudgetExhausted { .. })) => StopReason::BudgetExhausted,
        Err(e) => return Err(e),
    };
    result.queries_used = budget.used(oracle.inner());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AttackFamily, NesParams};
    use crate::defense::{DefendedModel, NoiseSpec};
    use crate::nn::{Activation, LayerSpec, Model};
    use crate::rng;

    fn toy() -> Model {
        let layers = vec![LayerSpec::dense(2, 2, Activation::Identity)];
        Model::from_parts(layers, 2, 0, vec![4.0, -4.0, -4.0, 4.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn update_rule() {
        let mut x = [0.5];
        x[0] -= 0.01 * sign(2.0);
        assert!((x[0] - 0.49).abs() < 1e-15);
    }

    #[test]
    fn breaks_undefended_toy_within_budget() {
        let m = toy();
        let cfg = AttackConfig {
            family: AttackFamily::QlNes,
            max_queries: 10_000,
            nes: NesParams { search_sigma: 0.001, samples: 10, step: 0.01, eps: 0.3 },
            ..Default::default()
        };
        let mut o =
            DefendedModel::new(&m, NoiseSpec::isotropic(2, 0.0).unwrap(), rng::stream(1, &[]), u64::MAX).unwrap();
        let r = ql_attack(&mut o, &[0.6, 0.4], Goal::Untargeted { label: 0 }, &cfg, &mut rng::stream(2, &[])).unwrap();
        assert!(r.success);
        let adv = r.adversarial_example.unwrap();
        assert_ne!(m.predict(&adv).unwrap(), 0);
        assert!(r.linf <= 0.3 + 1e-12);
        assert!(r.queries_used <= 10_000);
        assert_eq!(r.queries_used % 21, 0);
    }

    #[test]
    fn budget_is_respected_under_noise() {
        let m = toy();
        let cfg = AttackConfig {
            family: AttackFamily::QlNes,
            max_queries: 1000,
            nes: NesParams { samples: 10, eps: 0.05, ..Default::default() },
            ..Default::default()
        };
        let mut o =
            DefendedModel::new(&m, NoiseSpec::isotropic(2, 0.01).unwrap(), rng::stream(1, &[]), u64::MAX).unwrap();
        let r = ql_attack(&mut o, &[0.9, 0.1], Goal::Untargeted { label: 0 }, &cfg, &mut rng::stream(2, &[])).unwrap();
        assert!(r.queries_used <= 1000);
        assert_eq!(r.stop_reason, StopReason::BudgetExhausted);
    }
}
