use rand::Rng;
use rand_distr::StandardNormal;

use super::error::invalid;
use super::mc::chunked_sum;
use super::{AnalysisError, ErrorReport};
use crate::attacks::LOG_FLOOR;

/// `|g - γ|`.
pub fn fd_gradient_error(g: f64, gamma: f64) -> f64 {
    (g - gamma).abs()
}

fn check(probs: [f64; 4], sigma2: f64, h: f64) -> Result<(), AnalysisError> {
    if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return invalid("probabilities must lie in (0, 1]");
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return invalid("sigma2 must be nonnegative");
    }
    if !(h > 0.0) {
        return invalid("h must be positive");
    }
    Ok(())
}

/// Approximate `|E[g - γ]|` for the untargeted loss `log(p_c / p_o)`, where
/// `g` is the noise-free symmetric difference between outputs `(p_c, p_o)`
/// at `x + h e_i` and `(p_c', p_o')` at `x - h e_i`, and `γ` the same
/// difference of defended outputs with noise variance `σ²`:
///
/// `|σ²/(4h) · ((σ² + p_o² + p_c'²)/(p_c'² p_o²) - (σ² + p_o'² + p_c²)/(p_c² p_o'²))|`.
pub fn expected_fd_error_approx(
    p_c: f64,
    p_o: f64,
    p_c_prime: f64,
    p_o_prime: f64,
    sigma2: f64,
    h: f64,
) -> Result<f64, AnalysisError> {
    check([p_c, p_o, p_c_prime, p_o_prime], sigma2, h)?;
    let a = (sigma2 + p_o * p_o + p_c_prime * p_c_prime) / (p_c_prime * p_c_prime * p_o * p_o);
    let b = (sigma2 + p_o_prime * p_o_prime + p_c * p_c) / (p_c * p_c * p_o_prime * p_o_prime);
    Ok((sigma2 / (4.0 * h) * (a - b)).abs())
}

/// Leading-order term only, from `E[log(p + ε)] ≈ log p - σ²/(2p²)`:
/// `|σ²/(4h) · (1/p_c² - 1/p_o² - 1/p_c'² + 1/p_o'²)|`. Differs from
/// [`expected_fd_error_approx`] by an `O(σ⁴/h)` cross term.
pub fn expected_fd_error_leading(
    p_c: f64,
    p_o: f64,
    p_c_prime: f64,
    p_o_prime: f64,
    sigma2: f64,
    h: f64,
) -> Result<f64, AnalysisError> {
    check([p_c, p_o, p_c_prime, p_o_prime], sigma2, h)?;
    let inv2 = |p: f64| 1.0 / (p * p);
    Ok((sigma2 / (4.0 * h) * (inv2(p_c) - inv2(p_o) - inv2(p_c_prime) + inv2(p_o_prime))).abs())
}

fn noise_free_fd(p: [f64; 4], h: f64) -> f64 {
    ((p[0] / p[1]).ln() - (p[2] / p[3]).ln()) / (2.0 * h)
}

/// Estimates the mean and variance of each defended output `p + ε` from
/// `trials` samples, feeds them through `E[log X] ≈ log m - v/(2m²)`, and
/// compares the implied `|g - E[γ]|` with [`expected_fd_error_approx`].
#[allow(clippy::too_many_arguments)]
pub fn expected_fd_error_moment_mc(
    p_c: f64,
    p_o: f64,
    p_c_prime: f64,
    p_o_prime: f64,
    sigma2: f64,
    h: f64,
    trials: u64,
    seed: u64,
) -> Result<ErrorReport, AnalysisError> {
    let analytic = expected_fd_error_approx(p_c, p_o, p_c_prime, p_o_prime, sigma2, h)?;
    if trials < 2 {
        return invalid("need at least two trials");
    }
    let p = [p_c, p_o, p_c_prime, p_o_prime];
    let s = sigma2.sqrt();
    let mut elog = [0.0; 4];
    for (k, &pk) in p.iter().enumerate() {
        let sum = chunked_sum(trials, crate::rng::derive_seed(seed, &[k as u64]), |r| {
            pk + s * r.sample::<f64, _>(StandardNormal)
        });
        let mean = sum / trials as f64;
        let sq = chunked_sum(trials, crate::rng::derive_seed(seed, &[k as u64]), |r| {
            let v = pk + s * r.sample::<f64, _>(StandardNormal) - mean;
            v * v
        });
        let var = sq / (trials - 1) as f64;
        elog[k] = mean.ln() - var / (2.0 * mean * mean);
    }
    let gamma = ((elog[0] - elog[1]) - (elog[2] - elog[3])) / (2.0 * h);
    let empirical = fd_gradient_error(noise_free_fd(p, h), gamma);
    Ok(ErrorReport::new(analytic, empirical, trials))
}

/// Direct Monte-Carlo estimate of `|g - E[γ]|`, using the control variate
/// `ε/p` for each `E[log(p + ε)]`. Only meaningful while `σ` is small
/// against every probability (nonpositive outputs are floored as in the
/// attacks).
#[allow(clippy::too_many_arguments)]
pub fn expected_fd_error_direct_mc(
    p_c: f64,
    p_o: f64,
    p_c_prime: f64,
    p_o_prime: f64,
    sigma2: f64,
    h: f64,
    trials: u64,
    seed: u64,
) -> Result<ErrorReport, AnalysisError> {
    let analytic = expected_fd_error_approx(p_c, p_o, p_c_prime, p_o_prime, sigma2, h)?;
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let s = sigma2.sqrt();
    let p = [p_c, p_o, p_c_prime, p_o_prime];
    let mut bias = [0.0; 4];
    for (k, &pk) in p.iter().enumerate() {
        let sum = chunked_sum(trials, crate::rng::derive_seed(seed, &[k as u64]), |r| {
            let e = s * r.sample::<f64, _>(StandardNormal);
            (pk + e).max(LOG_FLOOR).ln() - pk.ln() - e / pk
        });
        bias[k] = sum / trials as f64;
    }
    // γ - g = ((b_c - b_o) - (b_c' - b_o')) / 2h in expectation
    let empirical = (((bias[0] - bias[1]) - (bias[2] - bias[3])) / (2.0 * h)).abs();
    Ok(ErrorReport::new(analytic, empirical, trials))
}
