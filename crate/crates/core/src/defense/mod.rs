//! Output randomization.
//!
//! A defended model answers a query with `d(p) = p + ε`,
//! `ε ~ N(μ, diag(σ²))`, instead of its probability vector `p`. This module
//! holds the noise model, the Gaussian machinery used to bound how often the
//! noise flips an honest prediction, the variance calibrators, and the
//! query-counted oracle that black-box attacks talk to.

mod calibration;
mod error;
mod gaussian;
mod noise;
mod oracle;

pub use calibration::{
    calibrate_variance, calibrate_variance_corrected, calibrate_variance_mc, misclassification_bound,
    misclassification_bound_literal, pairwise_flip_prob, pairwise_flip_prob_corrected, simulate_flip_rate,
    ConfidenceGap, McCalibration, MC_MAX_BISECTIONS,
};
pub use error::DefenseError;
pub use gaussian::{probit, std_normal_cdf, std_normal_pdf, std_normal_sf};
pub use noise::{perturb_output, NoiseSpec, OutputSite, PerturbedOutput, Phase, ProbVector};
pub use oracle::{defended_query, DefendedModel, Oracle, QueryError, QueryLedger};
