//! Numerical checks of the analysis behind output randomization: the bias
//! of finite-difference gradients under noise, the Hessian-trace
//! regularizer induced by noisy training, logit margins, and the Gaussian
//! tail lemmas.

mod error;
mod fd_error;
mod hessian;
mod lemmas;
mod mc;
mod verify;

use serde::{Deserialize, Serialize};

pub use error::AnalysisError;
pub use fd_error::{
    expected_fd_error_approx, expected_fd_error_direct_mc, expected_fd_error_leading, expected_fd_error_moment_mc,
    fd_gradient_error,
};
pub use hessian::{
    ce_hessian_logits, logit_margin, regularizer_empirical_check, taylor_regularizer, taylor_regularizer_isotropic,
    RegularizerCheck,
};
pub use lemmas::{
    lemma1_bound_check, lemma1_threshold, lemma2_bound, lemma2_bound_check, lemma2_threshold, mills_ratio_bounds,
    mills_ratio_bounds_tight, MillsBounds, MIN_LEMMA_TRIALS,
};
pub use verify::{verify_suite, CheckRow, CheckStatus, VerifyOptions};

/// Analytic value against a Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub analytic: f64,
    pub empirical: f64,
    pub abs_gap: f64,
    /// `abs_gap / max(|analytic|, 1e-12)`.
    pub rel_gap: f64,
    pub trials: u64,
}

impl ErrorReport {
    pub fn new(analytic: f64, empirical: f64, trials: u64) -> Self {
        let abs_gap = (analytic - empirical).abs();
        Self { analytic, empirical, abs_gap, rel_gap: abs_gap / analytic.abs().max(1e-12), trials }
    }
}

/// Monte-Carlo test of a probability inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub bound: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub trials: u64,
    /// The inequality holds within three standard errors.
    pub holds: bool,
}
