use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::error::invalid;
use super::mc::{chunked_count, frequency};
use super::{AnalysisError, LemmaCheck};
use crate::defense::{std_normal_pdf, std_normal_sf};

pub const MIN_LEMMA_TRIALS: u64 = 10_000;

/// Gaussian tail `Φᶜ(t)` between two closed-form bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MillsBounds {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl MillsBounds {
    pub fn holds(&self) -> bool {
        self.lower <= self.value && self.value <= self.upper
    }
}

fn check_t(t: f64) -> Result<(), AnalysisError> {
    if !(t >= 0.0 && t.is_finite()) {
        return invalid(format!("t must be a finite nonnegative number, got {t}"));
    }
    Ok(())
}

/// The sandwich `φ(t)/(t + √(t²+2)) ≤ Φᶜ(t) ≤ φ(t)/(t + 1)` as literally
/// stated, with `φ` the standard normal density. Evaluated, not asserted:
/// the upper side is below `Φᶜ(t)` for every `t ≥ 0`, because these are the
/// `erfc` bounds and lose a factor of two on conversion.
pub fn mills_ratio_bounds(t: f64) -> Result<MillsBounds, AnalysisError> {
    check_t(t)?;
    let phi = std_normal_pdf(t);
    Ok(MillsBounds { lower: phi / (t + (t * t + 2.0).sqrt()), value: std_normal_sf(t), upper: phi / (t + 1.0) })
}

/// `2φ(t)/(t + √(t²+4)) ≤ Φᶜ(t) ≤ 2φ(t)/(t + √(t²+8/π))`, valid for all
/// `t ≥ 0`. The ratio of the two sides tends to 1.
pub fn mills_ratio_bounds_tight(t: f64) -> Result<MillsBounds, AnalysisError> {
    check_t(t)?;
    let phi = std_normal_pdf(t);
    Ok(MillsBounds {
        lower: 2.0 * phi / (t + (t * t + 4.0).sqrt()),
        value: std_normal_sf(t),
        upper: 2.0 * phi / (t + (t * t + 8.0 / std::f64::consts::PI).sqrt()),
    })
}

fn check_trials(trials: u64) -> Result<(), AnalysisError> {
    if trials < MIN_LEMMA_TRIALS {
        return invalid(format!("need at least {MIN_LEMMA_TRIALS} trials, got {trials}"));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<(), AnalysisError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid("sigma must be positive");
    }
    Ok(())
}

/// `√(2 ln(1/δ))`, in units of `σ`.
pub fn lemma1_threshold(delta: f64) -> Result<f64, AnalysisError> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok((2.0 * (1.0 / delta).ln()).sqrt())
}

/// Frequency of `g < σ √(2 ln(1/δ))` for `g ~ N(0, σ²)` against `1 - δ`.
pub fn lemma1_bound_check(sigma: f64, delta: f64, trials: u64, seed: u64) -> Result<LemmaCheck, AnalysisError> {
    let thr = sigma * lemma1_threshold(delta)?;
    check_sigma(sigma)?;
    check_trials(trials)?;
    let hits = chunked_count(trials, seed, |r| sigma * r.sample::<f64, _>(StandardNormal) < thr);
    let (p, se) = frequency(hits, trials);
    let bound = 1.0 - delta;
    Ok(LemmaCheck { bound, empirical: p, std_error: se, trials, holds: p >= bound - 3.0 * se })
}

/// `√(2 ln 2K - ν)` with `ν = ln(2D ln 2K)`, in units of `σ`.
pub fn lemma2_threshold(num_classes: usize, d: f64) -> Result<f64, AnalysisError> {
    if num_classes < 1 {
        return invalid("need at least one class");
    }
    if !(d > 0.0 && d.is_finite()) {
        return invalid("D must be positive");
    }
    let l = (2.0 * num_classes as f64).ln();
    let nu = (2.0 * d * l).ln();
    let radicand = 2.0 * l - nu;
    if radicand < 0.0 {
        return invalid(format!(
            "threshold undefined for K = {num_classes}, D = {d}: 2 ln 2K = {:.4} < nu = {nu:.4}",
            2.0 * l
        ));
    }
    Ok(radicand.sqrt())
}

/// `exp(-√D / (8√(2π)))`.
pub fn lemma2_bound(d: f64) -> f64 {
    (-d.sqrt() / (8.0 * (2.0 * std::f64::consts::PI).sqrt())).exp()
}

/// Frequency of `max_i X_i < σ q` over `K` i.i.d. `N(0, σ²)` draws against
/// [`lemma2_bound`].
pub fn lemma2_bound_check(
    num_classes: usize,
    sigma: f64,
    d: f64,
    trials: u64,
    seed: u64,
) -> Result<LemmaCheck, AnalysisError> {
    let thr = sigma * lemma2_threshold(num_classes, d)?;
    check_sigma(sigma)?;
    check_trials(trials)?;
    let hits =
        chunked_count(trials, seed, |r| (0..num_classes).all(|_| sigma * r.sample::<f64, _>(StandardNormal) < thr));
    let (p, se) = frequency(hits, trials);
    let bound = lemma2_bound(d);
    Ok(LemmaCheck { bound, empirical: p, std_error: se, trials, holds: p <= bound + 3.0 * se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn literal_mills_values() {
        let m = mills_ratio_bounds(0.0).unwrap();
        assert_abs_diff_eq!(m.lower, 0.282095, epsilon = 1e-6);
        assert_abs_diff_eq!(m.value, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.upper, 0.398942, epsilon = 1e-6);
        let m = mills_ratio_bounds(2.0).unwrap();
        assert_abs_diff_eq!(m.lower, 0.012134, epsilon = 1e-6);
        assert_abs_diff_eq!(m.value, 0.022750, epsilon = 1e-6);
        assert_abs_diff_eq!(m.upper, 0.017997, epsilon = 1e-6);
        assert!(mills_ratio_bounds(-0.1).is_err());
        assert!(mills_ratio_bounds(f64::NAN).is_err());
    }

    #[test]
    fn literal_upper_side_never_holds() {
        for i in 0..=80 {
            let m = mills_ratio_bounds(i as f64 * 0.1).unwrap();
            assert!(m.lower <= m.value && m.upper < m.value, "t = {}", i as f64 * 0.1);
        }
    }

    #[test]
    fn tight_sandwich_on_grid() {
        for i in 0..=80 {
            let t = i as f64 * 0.1;
            let m = mills_ratio_bounds_tight(t).unwrap();
            assert!(m.holds(), "t = {t}: {m:?}");
        }
        let m = mills_ratio_bounds_tight(2.0).unwrap();
        assert_abs_diff_eq!(m.lower, 0.022364, epsilon = 1e-6);
        assert_abs_diff_eq!(m.upper, 0.023687, epsilon = 1e-6);
        let m = mills_ratio_bounds_tight(8.0).unwrap();
        assert!(m.upper / m.lower < 1.01);
    }

    #[test]
    fn lemma1_examples() {
        assert_abs_diff_eq!(lemma1_threshold(0.5).unwrap(), 1.17741, epsilon = 1e-5);
        assert_abs_diff_eq!(lemma1_threshold(0.1).unwrap(), 2.14597, epsilon = 1e-5);
        assert!(lemma1_threshold(0.0).is_err() && lemma1_threshold(1.0).is_err());
        let c = lemma1_bound_check(1.0, 0.5, 100_000, 1).unwrap();
        assert!(c.holds && (c.empirical - 0.8806).abs() < 4.0 * c.std_error, "{c:?}");
        let c = lemma1_bound_check(1.0, 0.1, 100_000, 1).unwrap();
        assert!(c.holds && (c.empirical - 0.98405).abs() < 4.0 * c.std_error, "{c:?}");
        assert!(lemma1_bound_check(1.0, 0.1, 100, 1).is_err());
    }

    #[test]
    fn lemma1_is_scale_invariant() {
        let a = lemma1_bound_check(1.0, 0.01, 100_000, 7).unwrap();
        let b = lemma1_bound_check(3.5, 0.01, 100_000, 7).unwrap();
        assert_eq!(a.empirical, b.empirical);
        assert!(a.holds);
    }

    #[test]
    fn lemma2_examples() {
        // scipy: sqrt(2 ln 20 - ln(2 ln 20)), norm.cdf(q)**10
        assert_abs_diff_eq!(lemma2_threshold(10, 1.0).unwrap(), 2.049666, epsilon = 1e-6);
        assert_abs_diff_eq!(lemma2_bound(1.0), 0.9513, epsilon = 1e-4);
        let c = lemma2_bound_check(10, 1.0, 1.0, 100_000, 2).unwrap();
        assert!(c.holds && (c.empirical - 0.815419).abs() < 4.0 * c.std_error, "{c:?}");
        let five = lemma2_bound_check(10, 5.0, 1.0, 100_000, 2).unwrap();
        assert_eq!(c.empirical, five.empirical);
    }

    #[test]
    fn lemma2_monotone_in_d() {
        let checks: Vec<LemmaCheck> =
            [1.0, 4.0, 16.0].iter().map(|&d| lemma2_bound_check(100, 1.0, d, 100_000, 3).unwrap()).collect();
        for w in checks.windows(2) {
            assert!(w[1].bound < w[0].bound);
            assert!(w[1].empirical < w[0].empirical);
        }
    }

    #[test]
    fn lemma2_rejects_negative_radicand() {
        // K = 1, D = 4: 2 ln 2 = 1.386 < ln(8 ln 2) = 1.713
        let err = lemma2_threshold(1, 4.0).unwrap_err().to_string();
        assert!(err.contains("K = 1"), "{err}");
    }

    #[test]
    fn lemma_grid_holds() {
        for delta in [0.5, 0.1, 0.01] {
            assert!(lemma1_bound_check(1.0, delta, 100_000, 11).unwrap().holds);
        }
        for k in [2, 10, 100] {
            for d in [1.0, 4.0] {
                if lemma2_threshold(k, d).is_ok() {
                    assert!(lemma2_bound_check(k, 1.0, d, 100_000, 12).unwrap().holds, "K = {k}, D = {d}");
                }
            }
        }
    }
}
