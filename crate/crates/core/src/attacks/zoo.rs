use rand::Rng;
use serde::{Deserialize, Serialize};

use super::result::in_unit_box;
use super::{
    l2_distance, AttackConfig, AttackError, AttackResult, AveragedOracle, Goal, StopReason, TracePoint, ZooSolver,
};
use crate::defense::{Oracle, QueryError};
use crate::nn::{argmax, NnError};

/// Outputs at or below this value are logged as `ln(LOG_FLOOR)`.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZooLoss {
    pub value: f64,
    /// A floored log was involved.
    pub clamped: bool,
}

fn floored_ln(v: f64) -> (f64, bool) {
    if v > LOG_FLOOR {
        (v.ln(), false)
    } else {
        (LOG_FLOOR.ln(), true)
    }
}

fn max_other(output: &[f64], skip: usize) -> f64 {
    output.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max)
}

fn check(output: &[f64], class: usize) -> Result<(), AttackError> {
    if output.len() < 2 {
        return Err(NnError::InvalidArchitecture("margin needs at least two classes".into()).into());
    }
    if class >= output.len() {
        return Err(NnError::ClassOutOfRange { class, num_classes: output.len() }.into());
    }
    Ok(())
}

/// `max{log f_i - max_{j≠i} log f_j, -κ}` for true class `i`.
pub fn zoo_untargeted_loss(output: &[f64], label: usize, kappa: f64) -> Result<ZooLoss, AttackError> {
    check(output, label)?;
    let (own, a) = floored_ln(output[label]);
    let (other, b) = floored_ln(max_other(output, label));
    Ok(ZooLoss { value: (own - other).max(-kappa), clamped: a || b })
}

/// `max{max_{i≠t} log f_i - log f_t, -κ}` for target `t`.
pub fn zoo_targeted_loss(output: &[f64], target: usize, kappa: f64) -> Result<ZooLoss, AttackError> {
    check(output, target)?;
    let (own, a) = floored_ln(output[target]);
    let (other, b) = floored_ln(max_other(output, target));
    Ok(ZooLoss { value: (other - own).max(-kappa), clamped: a || b })
}

pub(crate) fn goal_loss(output: &[f64], goal: Goal, kappa: f64) -> Result<ZooLoss, AttackError> {
    match goal {
        Goal::Untargeted { label } => zoo_untargeted_loss(output, label, kappa),
        Goal::Targeted { target } => zoo_targeted_loss(output, target, kappa),
    }
}

/// `‖x - x0‖² + c · adv_loss`.
pub fn zoo_objective(x: &[f64], x0: &[f64], c: f64, adv_loss: f64) -> f64 {
    let d: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
    d + c * adv_loss
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn query(&mut self, x: &[f64]) -> Result<Vec<f64>, QueryError> {
        (**self).query(x)
    }

    fn queries_used(&self) -> u64 {
        (**self).queries_used()
    }

    fn query_limit(&self) -> u64 {
        (**self).query_limit()
    }
}

/// Tracks the physical budget of one attack against a possibly shared oracle.
pub(crate) struct Budget {
    start: u64,
    limit: u64,
}

impl Budget {
    pub(crate) fn new(oracle: &dyn Oracle, cfg: &AttackConfig) -> Self {
        let start = oracle.queries_used();
        let limit = cfg.effective_max_queries().min(oracle.query_limit().saturating_sub(start));
        Self { start, limit }
    }

    pub(crate) fn used(&self, oracle: &dyn Oracle) -> u64 {
        oracle.queries_used() - self.start
    }

    pub(crate) fn allows(&self, oracle: &dyn Oracle, more: u64) -> bool {
        self.used(oracle) + more <= self.limit
    }
}

/// Zeroth-order coordinate descent on `‖x - x0‖² + c · L(x)`.
///
/// Each iteration picks one random coordinate, estimates its derivative
/// (and for the Newton solver its curvature) from `±h` probes, updates it
/// and clips to `[0, 1]`. The oracle is wrapped in an [`AveragedOracle`]
/// when `cfg.averaging > 1`. Stops at the first probe whose observed output
/// reaches the goal, when the budget cannot pay for another iteration, or
/// when the best observed objective has not improved for
/// `cfg.zoo.stagnation_queries` queries.
pub fn zoo_attack<R: Rng + ?Sized>(
    oracle: &mut dyn Oracle,
    x0: &[f64],
    goal: Goal,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    if x0.is_empty() {
        return Err(AttackError::InvalidConfig("empty input".into()));
    }
    let budget = Budget::new(oracle, cfg);
    let mut oracle = AveragedOracle::new(oracle, cfg.averaging);
    let k = cfg.averaging as u64;
    let zc = &cfg.zoo;
    let newton = zc.solver == ZooSolver::Newton;
    let per_iteration = if newton { 3 * k } else { 2 * k };
    let n = x0.len();
    let h = cfg.h;

    let mut result = AttackResult::new();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut t = vec![0i32; n];
    let mut best = f64::INFINITY;
    let mut last_improvement = 0u64;
    let mut probe = x.clone();
    let mut iteration = 0usize;

    let eval = |oracle: &mut AveragedOracle<&mut dyn Oracle>, p: &[f64], result: &mut AttackResult| {
        let out = oracle.query(p)?;
        let loss = goal_loss(&out, goal, cfg.kappa)?;
        result.clamped |= loss.clamped;
        Ok::<_, AttackError>((zoo_objective(p, x0, cfg.c, loss.value), argmax(&out)))
    };

    result.stop_reason = loop {
        if !budget.allows(oracle.inner(), per_iteration) {
            break StopReason::BudgetExhausted;
        }
        let i = rng.random_range(0..n);
        let mut values = [0.0; 2];
        let mut hit: Option<Vec<f64>> = None;
        for (slot, delta) in [h, -h].into_iter().enumerate() {
            probe.copy_from_slice(&x);
            probe[i] += delta;
            let (f, pred) = match eval(&mut oracle, &probe, &mut result) {
                Ok(r) => r,
                Err(AttackError::Query(QueryError::BudgetExhausted { .. })) => {
                    result.queries_used = budget.used(oracle.inner());
                    result.stop_reason = StopReason::BudgetExhausted;
                    return Ok(result);
                }
                Err(e) => return Err(e),
            };
            values[slot] = f;
            if goal.reached(pred) && in_unit_box(&probe) {
                let better = hit.as_ref().is_none_or(|b| l2_distance(&probe, x0) < l2_distance(b, x0));
                if better {
                    hit = Some(probe.clone());
                }
            }
        }
        let (fp, fm) = (values[0], values[1]);
        let g = (fp - fm) / (2.0 * h);

        let step = if newton {
            let (f0, pred0) = match eval(&mut oracle, &x, &mut result) {
                Ok(r) => r,
                Err(AttackError::Query(QueryError::BudgetExhausted { .. })) => {
                    result.queries_used = budget.used(oracle.inner());
                    result.stop_reason = StopReason::BudgetExhausted;
                    return Ok(result);
                }
                Err(e) => return Err(e),
            };
            if goal.reached(pred0) && in_unit_box(&x) {
                hit = Some(x.clone());
            }
            let curvature = (fp - 2.0 * f0 + fm) / (h * h);
            if curvature > 0.0 {
                -zc.newton_eta * g / curvature.max(zc.hessian_floor)
            } else {
                -zc.newton_eta * g
            }
        } else {
            t[i] += 1;
            m[i] = zc.beta1 * m[i] + (1.0 - zc.beta1) * g;
            v[i] = zc.beta2 * v[i] + (1.0 - zc.beta2) * g * g;
            let m_hat = m[i] / (1.0 - zc.beta1.powi(t[i]));
            let v_hat = v[i] / (1.0 - zc.beta2.powi(t[i]));
            -zc.learning_rate * m_hat / (v_hat.sqrt() + 1e-8)
        };

        let used = budget.used(oracle.inner());
        let observed = fp.min(fm);
        if observed < best {
            best = observed;
            last_improvement = used;
        }
        if let Some(adv) = hit {
            result.record_success(&adv, x0);
        }
        result.loss_trace.push(TracePoint {
            iteration,
            queries: used,
            loss: 0.5 * (fp + fm),
            best_l2: result.best_l2(),
        });
        iteration += 1;
        if result.success {
            break StopReason::Success;
        }
        if step.is_finite() {
            x[i] = (x[i] + step).clamp(0.0, 1.0);
        }
        if used - last_improvement >= zc.stagnation_queries {
            break StopReason::Stagnation;
        }
    };
    result.queries_used = budget.used(oracle.inner());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackFamily;
    use crate::defense::{DefendedModel, NoiseSpec};
    use crate::nn::{Activation, LayerSpec, Model};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loss_examples() {
        let l = zoo_untargeted_loss(&[0.7, 0.2, 0.1], 0, 0.0).unwrap();
        assert_abs_diff_eq!(l.value, 1.252763, epsilon = 1e-6);
        assert!(!l.clamped);
        assert_eq!(zoo_untargeted_loss(&[0.25; 4], 2, 0.0).unwrap().value, 0.0);
        assert_eq!(zoo_untargeted_loss(&[0.2, 0.7, 0.1], 0, 0.0).unwrap().value, 0.0);
        assert_abs_diff_eq!(zoo_targeted_loss(&[0.7, 0.2, 0.1], 1, 0.0).unwrap().value, 1.252763, epsilon = 1e-6);
        assert_eq!(zoo_targeted_loss(&[0.01, 0.98, 0.01], 1, 0.3).unwrap().value, -0.3);
        // margin -0.2 with kappa 0.5 is not clamped
        let f_t = 0.5f64;
        let other = f_t * (-0.2f64).exp();
        let v = zoo_targeted_loss(&[other, f_t, 1.0 - f_t - other], 1, 0.5).unwrap().value;
        assert_abs_diff_eq!(v, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_outputs_are_floored_and_flagged() {
        let l = zoo_untargeted_loss(&[0.9, -0.05, 0.15], 0, 0.0).unwrap();
        assert!(!l.clamped);
        let l = zoo_untargeted_loss(&[-0.1, 0.5, 0.6], 0, 100.0).unwrap();
        assert!(l.clamped);
        assert_abs_diff_eq!(l.value, LOG_FLOOR.ln() - 0.6f64.ln(), epsilon = 1e-12);
        assert!(zoo_untargeted_loss(&[0.5, 0.5], 2, 0.0).is_err());
    }

    #[test]
    fn objective_examples() {
        assert_eq!(zoo_objective(&[0.3, 0.4], &[0.3, 0.4], 5.0, 0.0), 0.0);
        assert_abs_diff_eq!(zoo_objective(&[0.6, 0.4], &[0.5, 0.4], 1.0, 2.0), 2.01, epsilon = 1e-12);
        assert_abs_diff_eq!(zoo_objective(&[0.6, 0.4], &[0.5, 0.4], 0.0, 2.0), 0.01, epsilon = 1e-12);
    }

    /// Logistic regression separating x0 < x1 (class 1) from x0 > x1 (class 0).
    fn toy() -> Model {
        let layers = vec![LayerSpec::dense(2, 2, Activation::Identity)];
        Model::from_parts(layers, 2, 0, vec![4.0, -4.0, -4.0, 4.0, 0.0, 0.0]).unwrap()
    }

    fn cfg() -> AttackConfig {
        AttackConfig { family: AttackFamily::Zoo, max_queries: 20_000, c: 1.0, ..Default::default() }
    }

    #[test]
    fn breaks_an_undefended_toy_model() {
        let m = toy();
        let x0 = [0.6, 0.4];
        assert_eq!(m.predict(&x0).unwrap(), 0);
        for solver in [ZooSolver::Adam, ZooSolver::Newton] {
            let mut c = cfg();
            c.zoo.solver = solver;
            let mut o =
                DefendedModel::new(&m, NoiseSpec::isotropic(2, 0.0).unwrap(), rng::stream(1, &[]), u64::MAX).unwrap();
            let r = zoo_attack(&mut o, &x0, Goal::Untargeted { label: 0 }, &c, &mut rng::stream(2, &[])).unwrap();
            assert!(r.success, "{solver:?}: {:?}", r.stop_reason);
            let adv = r.adversarial_example.as_ref().unwrap();
            assert_ne!(m.predict(adv).unwrap(), 0);
            assert!(r.l2 < 0.3, "{} {:?} {:?}", r.l2, adv, r.loss_trace.iter().rev().take(3).collect::<Vec<_>>());
            assert!(r.queries_used <= c.max_queries);
            assert_eq!(r.queries_used, o.queries_used());
        }
    }

    #[test]
    fn zero_budget_returns_immediately() {
        let m = toy();
        let mut o =
            DefendedModel::new(&m, NoiseSpec::isotropic(2, 0.0).unwrap(), rng::stream(1, &[]), u64::MAX).unwrap();
        let c = AttackConfig { max_queries: 0, ..cfg() };
        let r = zoo_attack(&mut o, &[0.6, 0.4], Goal::Untargeted { label: 0 }, &c, &mut rng::stream(2, &[])).unwrap();
        assert!(!r.success);
        assert_eq!(r.queries_used, 0);
        assert_eq!(r.stop_reason, StopReason::BudgetExhausted);
    }

    #[test]
    fn averaging_budget_and_accounting() {
        let m = toy();
        let mut o =
            DefendedModel::new(&m, NoiseSpec::isotropic(2, 0.01).unwrap(), rng::stream(1, &[]), u64::MAX).unwrap();
        let c = AttackConfig { max_queries: 1000, averaging: 7, ..cfg() };
        let r = zoo_attack(&mut o, &[0.9, 0.1], Goal::Untargeted { label: 0 }, &c, &mut rng::stream(3, &[])).unwrap();
        assert!(r.queries_used <= 2000);
        assert_eq!(r.queries_used % 14, 0);
        assert_eq!(r.queries_used, o.queries_used());
    }

    #[test]
    fn iterates_stay_in_the_box() {
        let m = toy();
        let mut o =
            DefendedModel::new(&m, NoiseSpec::isotropic(2, 0.0).unwrap(), rng::stream(1, &[]), u64::MAX).unwrap();
        let r =
            zoo_attack(&mut o, &[1.0, 0.0], Goal::Untargeted { label: 0 }, &cfg(), &mut rng::stream(2, &[])).unwrap();
        if let Some(adv) = r.adversarial_example {
            assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
