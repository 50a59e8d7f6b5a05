//! Reverse-mode differentiation over the handful of matrix primitives the
//! model uses, plus a finite-difference checker.

mod check;
mod params;
mod tape;

pub use check::{grad_check, kink_distance, GradCheckReport, MIN_COORDINATES};
pub use params::{forward_backward, Bindings, Grads, Param, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::{sigmoid, softmax_rows};
