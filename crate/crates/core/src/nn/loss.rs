use serde::{Deserialize, Serialize};

use super::{NnError, Real};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_finite<T: Real>(logits: &[T]) -> Result<(), NnError> {
    if logits.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite("logits"))
    }
}

fn check_class(class: usize, num_classes: usize) -> Result<(), NnError> {
    if class < num_classes {
        Ok(())
    } else {
        Err(NnError::ClassOutOfRange { class, num_classes })
    }
}

fn max_of<T: Real>(values: &[T]) -> T {
    values.iter().copied().fold(T::neg_infinity(), T::max)
}

fn max_excluding<T: Real>(values: &[T], skip: usize) -> (usize, T) {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        if i == skip {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.expect("at least two classes")
}

pub(crate) fn softmax_unchecked<T: Real>(logits: &[T]) -> Vec<T> {
    let m = max_of(logits);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / sum;
    }
    out
}

/// Max-shifted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>, NnError> {
    check_finite(logits)?;
    Ok(softmax_unchecked(logits))
}

/// `log softmax(z)` computed as `z - logsumexp(z)`.
pub fn log_softmax<T: Real>(logits: &[T]) -> Result<Vec<T>, NnError> {
    check_finite(logits)?;
    let m = max_of(logits);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
    Ok(logits.iter().map(|&z| z - lse).collect())
}

/// Cross-entropy of the logits against class `y`, with its logit gradient
/// `softmax(z) - one_hot(y)`. The loss is taken from the logits directly so
/// large logits never pass through materialized probabilities.
pub fn cross_entropy<T: Real>(logits: &[T], y: usize) -> Result<(T, Vec<T>), NnError> {
    check_finite(logits)?;
    check_class(y, logits.len())?;
    let m = max_of(logits);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
    let loss = lse - logits[y];
    let mut grad = softmax_unchecked(logits);
    grad[y] = grad[y] - T::one();
    Ok((loss, grad))
}

/// Clamped logit margin `max(z_y - max_{i != y} z_i, -kappa)`.
pub fn cw_margin_loss<T: Real>(logits: &[T], y: usize, kappa: f64) -> Result<T, NnError> {
    if logits.len() < 2 {
        return Err(NnError::InvalidArchitecture("margin needs at least two classes".into()));
    }
    check_class(y, logits.len())?;
    let (_, other) = max_excluding(logits, y);
    Ok((logits[y] - other).max(-T::of(kappa)))
}

/// Targeted Carlini-Wagner objective `max(max_{i != t} z_i - z_t, -kappa)`
/// and its logit gradient. Minimizing it drives the prediction to `t`.
pub fn cw_targeted_loss<T: Real>(logits: &[T], t: usize, kappa: f64) -> Result<(T, Vec<T>), NnError> {
    if logits.len() < 2 {
        return Err(NnError::InvalidArchitecture("margin needs at least two classes".into()));
    }
    check_class(t, logits.len())?;
    let (j, other) = max_excluding(logits, t);
    let raw = other - logits[t];
    let floor = -T::of(kappa);
    let mut grad = vec![T::zero(); logits.len()];
    if raw > floor {
        grad[j] = T::one();
        grad[t] = -T::one();
        Ok((raw, grad))
    } else {
        Ok((floor, grad))
    }
}

/// Loss an attacker ascends (and training descends, for `Xent`).
///
/// `Cw` is the negated clamped margin, `-max(z_y - max_{i != y} z_i, -kappa)`,
/// so both variants grow as the input moves toward misclassification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Xent,
    Cw { kappa: f64 },
}

impl LossKind {
    pub fn eval<T: Real>(&self, logits: &[T], y: usize) -> Result<(T, Vec<T>), NnError> {
        match *self {
            LossKind::Xent => cross_entropy(logits, y),
            LossKind::Cw { kappa } => {
                check_finite(logits)?;
                let margin = cw_margin_loss(logits, y, kappa)?;
                let mut grad = vec![T::zero(); logits.len()];
                // Clamp active (already past -kappa): flat.
                if margin > -T::of(kappa) {
                    let (j, _) = max_excluding(logits, y);
                    grad[j] = T::one();
                    grad[y] = -T::one();
                }
                Ok((-margin, grad))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Xent => "xent",
            LossKind::Cw { .. } => "cw",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[0.0, 9f64.ln()]).unwrap();
        assert_abs_diff_eq!(p[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.9, epsilon = 1e-12);
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(NnError::NonFinite(_))));
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, g) = cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-12);
        let (l, _) = cross_entropy(&[0.0, 9f64.ln()], 1).unwrap();
        assert_abs_diff_eq!(l, 0.105361, epsilon = 1e-6);
        assert!(matches!(cross_entropy(&[0.0, 0.0], 2), Err(NnError::ClassOutOfRange { .. })));
    }

    #[test]
    fn cross_entropy_gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = rng.random_range(0..6);
            let (_, g) = cross_entropy(&z, y).unwrap();
            let h = 1e-4;
            for i in 0..6 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (cross_entropy(&zp, y).unwrap().0 - cross_entropy(&zm, y).unwrap().0) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-6);
                assert!(rel <= 1e-5, "coordinate {i}: analytic {} vs fd {fd}", g[i]);
            }
        }
    }

    #[test]
    fn cw_margin_examples() {
        assert_eq!(cw_margin_loss(&[5.0, 1.0, 0.0], 0, 0.0).unwrap(), 4.0);
        assert_eq!(cw_margin_loss(&[1.0, 5.0], 0, 0.0).unwrap(), 0.0);
        assert_eq!(cw_margin_loss(&[2.0, 1.5, 1.5], 0, 1.0).unwrap(), 0.5);
        assert!(cw_margin_loss(&[1.0, 2.0], 5, 0.0).is_err());
    }

    #[test]
    fn cw_loss_kind_gradient_and_clamp() {
        let (l, g) = LossKind::Cw { kappa: 0.0 }.eval(&[5.0, 1.0, 0.0], 0).unwrap();
        assert_eq!(l, -4.0);
        assert_eq!(g, vec![-1.0, 1.0, 0.0]);
        let (l, g) = LossKind::Cw { kappa: 0.0 }.eval(&[1.0, 5.0], 0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn targeted_cw() {
        let (l, g) = cw_targeted_loss(&[3.0, 1.0, 2.0], 1, 0.0).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g, vec![1.0, -1.0, 0.0]);
        let (l, g) = cw_targeted_loss(&[0.0, 4.0, 1.0], 1, 0.5).unwrap();
        assert_eq!(l, -0.5);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution_and_shift_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 2..12),
            shift in -500.0f64..500.0,
        ) {
            let p = softmax(&z).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let (_, ga) = cross_entropy(&z, 0).unwrap();
            let (_, gb) = cross_entropy(&shifted, 0).unwrap();
            for (a, b) in ga.iter().zip(&gb) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let ma = cw_margin_loss(&z, 0, 0.0).unwrap();
            let mb = cw_margin_loss(&shifted, 0, 0.0).unwrap();
            prop_assert_eq!(ma > 0.0, mb > 0.0);
            prop_assert!(ma >= 0.0);
        }
    }
}
