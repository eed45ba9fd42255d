//! Output randomization as a defense against adversarial examples.
//!
//! The crate is a small laboratory with five parts:
//!
//! - [`nn`]: a feed-forward network engine with manual backpropagation,
//!   SGD training, logit-noise ("output randomization") training and PGD
//!   adversarial training.
//! - [`defense`]: the stochastic output `d(p) = p + ε`, misclassification
//!   bounds, variance calibration and a query-counted black-box oracle.
//! - [`attacks`]: finite-difference and NES gradient estimators, the ZOO and
//!   query-limited attacks, white-box PGD and CW-L2, and query averaging for
//!   adaptive attackers.
//! - [`analysis`]: numerical checks of the gradient-error approximation, the
//!   Hessian-trace regularizer and the Gaussian tail lemmas.
//! - [`harness`]: datasets, experiment configuration, evaluation and report
//!   emission used by the `orlab` binary.
//!
//! Runnable walkthroughs of each capability live in `crates/core/examples/`.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attacks;
pub mod defense;
pub mod harness;
pub mod nn;
pub mod numfmt;
pub mod rng;

pub use nn::{LabeledExample, Model, Real};
