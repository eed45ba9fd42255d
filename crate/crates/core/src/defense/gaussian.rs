use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

use super::DefenseError;

/// Standard normal CDF `Φ(t)`, evaluated through `erfc` so the lower tail
/// keeps full relative precision.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// Upper tail `Φᶜ(t) = 1 - Φ(t)`.
pub fn std_normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / SQRT_2)
}

pub fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Inverse standard normal CDF on `(0, 1)`.
pub fn probit(k: f64) -> Result<f64, DefenseError> {
    if !(k > 0.0 && k < 1.0) {
        return Err(DefenseError::ProbabilityOutOfRange(k));
    }
    let t = -SQRT_2 * erfc_inv(2.0 * k);
    // one Newton step on Φ(t) = k
    let pdf = std_normal_pdf(t);
    Ok(if pdf > 0.0 { t - (std_normal_cdf(t) - k) / pdf } else { t })
}
