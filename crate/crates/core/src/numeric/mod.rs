//! Differentiable building blocks with hand-derived backward passes.
//!
//! Every operation exposes a forward function and a matching backward
//! function; [`gradcheck`] verifies the pairs against central differences.

pub mod adam;
pub mod gradcheck;
pub mod mlp;
pub mod ops;
pub mod param;
pub mod schedule;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_fn, DifferentiableOp};
pub use mlp::{Mlp, MlpGrad, MlpTrace};
pub use ops::{
    activation, activation_backward, affine_backward, affine_forward, mean_backward, mean_reduce, sum_backward, sum_reduce,
    Activation, Matrix,
};
pub use param::ParamBlock;
pub use schedule::exponential_lr;
