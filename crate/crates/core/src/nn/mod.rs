//! Minimal feed-forward network engine.
//!
//! Dense and small valid-padding convolution layers, relu/identity
//! activations, softmax cross-entropy and Carlini-Wagner margin losses,
//! reverse-mode gradients written out by hand, and minibatch SGD with
//! optional logit noise and PGD adversarial training.
//!
//! Models are generic over the scalar type ([`Real`]); training and
//! gradient checking run in `f64`, and a trained model can be cast to `f32`
//! to evaluate it the way single-precision frameworks do.

mod checkpoint;
mod error;
mod gradcheck;
mod loss;
mod model;
mod real;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use error::NnError;
pub use gradcheck::{grad_check, GRAD_CHECK_STEP};
pub use loss::{argmax, cross_entropy, cw_margin_loss, cw_targeted_loss, log_softmax, softmax, LossKind};
pub use model::{Activation, Gradients, Injection, LabeledExample, LayerSpec, Model};
pub use real::Real;
pub use train::{train, AdvTrainConfig, NoiseSite, TrainConfig, TrainLog, TrainLogEntry};
