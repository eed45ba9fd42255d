use serde::{Deserialize, Serialize};

use super::{
    ce_hessian_logits, expected_fd_error_moment_mc, lemma1_bound_check, lemma2_bound_check, lemma2_threshold,
    mills_ratio_bounds, mills_ratio_bounds_tight, regularizer_empirical_check, AnalysisError,
};
use crate::defense::{calibrate_variance_corrected, calibrate_variance_mc};
use crate::nn::cross_entropy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Reported for comparison only.
    Info,
}

impl CheckStatus {
    fn of(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Info => "INFO",
        }
    }
}

/// One line of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub analytic: f64,
    pub empirical: f64,
    pub gap: f64,
    pub status: CheckStatus,
}

impl CheckRow {
    fn new(name: impl Into<String>, analytic: f64, empirical: f64, status: CheckStatus) -> Self {
        Self { name: name.into(), analytic, empirical, gap: (empirical - analytic).abs(), status }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub lemma_trials: u64,
    pub regularizer_trials: u64,
    pub fd_error_trials: u64,
    pub calibration_trials: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            lemma_trials: 100_000,
            regularizer_trials: 1_000_000,
            fd_error_trials: 1_000_000,
            calibration_trials: 200_000,
        }
    }
}

/// Runs every numerical check and returns one row per check, in a fixed
/// order. Deterministic in `opts`.
pub fn verify_suite(opts: &VerifyOptions) -> Result<Vec<CheckRow>, AnalysisError> {
    let mut rows = Vec::new();
    let seed = |k: u64| rng::derive_seed(opts.seed, &[rng::tags::VERIFY, k]);

    for (i, delta) in [0.5, 0.1, 0.01].into_iter().enumerate() {
        let c = lemma1_bound_check(1.0, delta, opts.lemma_trials, seed(i as u64))?;
        rows.push(CheckRow::new(format!("lemma1_delta={delta}"), c.bound, c.empirical, CheckStatus::of(c.holds)));
    }
    for (i, k) in [2usize, 10, 100].into_iter().enumerate() {
        for (j, d) in [1.0, 4.0].into_iter().enumerate() {
            if lemma2_threshold(k, d).is_err() {
                continue;
            }
            let c = lemma2_bound_check(k, 1.0, d, opts.lemma_trials, seed(10 + 2 * i as u64 + j as u64))?;
            rows.push(CheckRow::new(format!("lemma2_K={k}_D={d}"), c.bound, c.empirical, CheckStatus::of(c.holds)));
        }
    }

    for t in [0.0, 2.0] {
        let m = mills_ratio_bounds(t)?;
        rows.push(CheckRow::new(format!("mills_literal_lower_t={t}"), m.lower, m.value, CheckStatus::Info));
        rows.push(CheckRow::new(format!("mills_literal_upper_t={t}"), m.upper, m.value, CheckStatus::Info));
    }
    let mut worst: Option<(f64, f64)> = None;
    let mut all_hold = true;
    for i in 10..=80 {
        let t = i as f64 / 10.0;
        let m = mills_ratio_bounds_tight(t)?;
        all_hold &= m.holds();
        let slack = ((m.value - m.lower) / m.value).min((m.upper - m.value) / m.value);
        if worst.is_none_or(|(_, s)| slack < s) {
            worst = Some((t, slack));
        }
    }
    let (t_worst, _) = worst.expect("grid is not empty");
    let m = mills_ratio_bounds_tight(t_worst)?;
    rows.push(CheckRow::new("mills_sandwich_t=1..8", m.upper, m.value, CheckStatus::of(all_hold)));
    let m = mills_ratio_bounds_tight(8.0)?;
    rows.push(CheckRow::new("mills_ratio_t=8", 1.0, m.upper / m.lower, CheckStatus::of(m.upper / m.lower < 1.01)));

    let logits = [1.2, -0.4, 0.3, 2.0];
    let h = ce_hessian_logits(&logits)?;
    let step = 1e-4;
    let mut worst_fd: f64 = 0.0;
    for i in 0..logits.len() {
        for j in 0..logits.len() {
            let at = |di: f64, dj: f64| -> Result<f64, AnalysisError> {
                let mut v = logits;
                v[i] += di;
                v[j] += dj;
                Ok(cross_entropy(&v, 0)?.0)
            };
            let fd = (at(step, step)? - at(step, -step)? - at(-step, step)? + at(-step, -step)?) / (4.0 * step * step);
            worst_fd = worst_fd.max((fd - h[(i, j)]).abs());
        }
    }
    rows.push(CheckRow::new("hessian_vs_double_fd", 0.0, worst_fd, CheckStatus::of(worst_fd <= 1e-4)));

    let r = regularizer_empirical_check(&[0.0, 0.0], 0, 0.05, opts.regularizer_trials, seed(20))?;
    rows.push(CheckRow::new(
        "regularizer_half_sigma=0.05",
        r.report.analytic,
        r.report.empirical,
        CheckStatus::of(r.report.rel_gap <= 0.1),
    ));
    rows.push(CheckRow::new("regularizer_no_half_sigma=0.05", r.without_half, r.report.empirical, CheckStatus::Info));
    let z = [1.0, -0.5, 0.3, 2.0];
    let mut gaps = Vec::new();
    for (k, s) in [0.1, 0.05, 0.01].into_iter().enumerate() {
        let r = regularizer_empirical_check(&z, 3, s, opts.regularizer_trials / 5, seed(21 + k as u64))?;
        gaps.push(r.report.rel_gap);
        rows.push(CheckRow::new(
            format!("regularizer_sigma={s}"),
            r.report.analytic,
            r.report.empirical,
            CheckStatus::Info,
        ));
    }
    rows.push(CheckRow::new(
        "regularizer_gap_ordering",
        gaps[0],
        gaps[2],
        CheckStatus::of(gaps[0] > gaps[1] && gaps[1] > gaps[2]),
    ));

    let r = expected_fd_error_moment_mc(0.7, 0.2, 0.6, 0.3, 0.01, 1e-4, opts.fd_error_trials, seed(30))?;
    rows.push(CheckRow::new("fd_error_approx", r.analytic, r.empirical, CheckStatus::of(r.rel_gap < 0.05)));

    let corrected =
        calibrate_variance_corrected(0.5, 0.1).map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
    let mut crng = rng::stream(seed(40), &[]);
    let mc = calibrate_variance_mc(0.5, 0.1, opts.calibration_trials, &mut crng)
        .map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
    rows.push(CheckRow::new(
        "calibration_mc_delta=0.5_K=0.1",
        corrected,
        mc.sigma2,
        CheckStatus::of((mc.sigma2 - corrected).abs() / corrected <= 0.05),
    ));

    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            seed: 3,
            lemma_trials: 20_000,
            regularizer_trials: 100_000,
            fd_error_trials: 1_000_000,
            calibration_trials: 50_000,
        }
    }

    #[test]
    fn suite_passes_and_repeats() {
        let a = verify_suite(&quick()).unwrap();
        assert!(a.iter().all(CheckRow::passed), "{a:#?}");
        assert!(a.iter().any(|r| r.status == CheckStatus::Info));
        assert_eq!(a.iter().filter(|r| r.name.starts_with("lemma")).count(), 9);
        let b = verify_suite(&quick()).unwrap();
        assert_eq!(a, b);
    }
}
