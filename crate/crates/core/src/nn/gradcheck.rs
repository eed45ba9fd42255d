use super::{LossKind, Model, NnError};

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Worst relative disagreement between the backward pass and central finite
/// differences of the cross-entropy loss, over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`, so coordinates where
/// both are exactly zero (dead relu units) compare as equal and gradients
/// below `1e-6` are judged on absolute error.
pub fn grad_check(model: &Model, x: &[f64], y: usize) -> Result<f64, NnError> {
    let analytic = model.backward(x, y, LossKind::Xent, None)?.params;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + GRAD_CHECK_STEP;
        let up = LossKind::Xent.eval(&probe.forward(x)?, y)?.0;
        probe.params_mut()[i] = orig - GRAD_CHECK_STEP;
        let down = LossKind::Xent.eval(&probe.forward(x)?, y)?.0;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let diff = (a - numeric).abs();
        if diff == 0.0 {
            continue;
        }
        worst = worst.max(diff / a.abs().max(numeric.abs()).max(1e-6));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    #[test]
    fn identity_net_is_nearly_exact() {
        let layers = vec![LayerSpec::dense(2, 2, Activation::Identity)];
        let m = Model::from_parts(layers, 2, 0, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(grad_check(&m, &[0.3, 0.7], 0).unwrap() <= 1e-7);
    }

    #[test]
    fn random_relu_net() {
        let m: Model = Model::mlp(&[5, 7, 4, 3], 11).unwrap();
        let err = grad_check(&m, &[0.1, 0.5, 0.9, 0.3, 0.7], 2).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn dead_relu_units_compare_as_zero() {
        // hidden biases strongly negative: every hidden unit is dead
        let mut m: Model = Model::mlp(&[3, 4, 2], 2).unwrap();
        for b in &mut m.params_mut()[12..16] {
            *b = -50.0;
        }
        let g = m.backward(&[0.5, 0.5, 0.5], 1, LossKind::Xent, None).unwrap();
        assert!(g.params[..16].iter().all(|&v| v == 0.0));
        assert!(grad_check(&m, &[0.5, 0.5, 0.5], 1).unwrap() <= 1e-4);
    }

    #[test]
    fn conv_net_gradients() {
        let layers = vec![
            LayerSpec::Conv2d {
                channels_in: 1,
                channels_out: 2,
                height: 4,
                width: 4,
                kernel: 2,
                activation: Activation::Relu,
            },
            LayerSpec::dense(18, 3, Activation::Identity),
        ];
        let m = Model::init(layers, 3, 4).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).fract()).collect();
        assert!(grad_check(&m, &x, 1).unwrap() <= 1e-4);
    }
}
