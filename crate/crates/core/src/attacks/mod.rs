//! Attacks on (possibly defended) classifiers.
//!
//! Black-box attacks ([`zoo_attack`], [`ql_attack`]) talk to an
//! [`Oracle`](crate::defense::Oracle) and never touch model internals.
//! White-box attacks ([`pgd_attack`], [`cw_l2_attack`]) use input gradients
//! from the network directly.

mod averaging;
mod config;
pub mod cw;
mod error;
mod fd;
pub mod pgd;
mod ql;
mod result;
pub mod zoo;

pub use averaging::AveragedOracle;
pub use config::{
    AttackConfig, AttackFamily, CwParams, NesParams, PgdConfig, PgdParams, Precision, ZooParams, ZooSolver,
};
pub use cw::cw_l2_attack;
pub use error::AttackError;
pub use fd::{fd_gradient, fd_gradient_coords, nes_gradient, GradientEstimate};
pub use pgd::{pgd_attack, pgd_attack_at_precision, pgd_perturb, project_linf_box};
pub use ql::ql_attack;
pub use result::{l2_distance, linf_distance, AttackResult, Goal, StopReason, TracePoint};
pub use zoo::{zoo_attack, zoo_objective, zoo_targeted_loss, zoo_untargeted_loss, ZooLoss, LOG_FLOOR};
