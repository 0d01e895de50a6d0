//! Dense linear algebra, reverse-mode differentiation and optimisation.

mod gradcheck;
mod matrix;
mod optim;
mod params;
mod tape;

pub use gradcheck::{finite_diff_check, grad_eval, GRAD_FLOOR};
pub use matrix::DenseMatrix;
pub use optim::{AdamW, AdamWConfig, OneCycle, ONE_CYCLE_FINAL_DIV, ONE_CYCLE_START_DIV};
pub use params::{fan_in_normal, ParamSet};
pub use tape::{sigmoid, softmax_rows, Grads, Tape, Var, PROB_CLAMP};
