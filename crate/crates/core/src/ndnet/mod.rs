//! Minimal dense-network core: layers, multilayer perceptrons with exact
//! reverse-mode gradients, the Adam optimizer and an inverse-time-decay
//! learning-rate schedule.

mod adam;
mod layer;
mod mlp;
mod params;
mod schedule;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use layer::{Activation, DenseLayer};
pub use mlp::{Mlp, MlpTrace, INIT_STD};
pub use params::Parameters;
pub use schedule::LrSchedule;
