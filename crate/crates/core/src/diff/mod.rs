//! Reverse-mode differentiation, Adam and finite-difference checking.

pub mod adam;
pub mod check;
pub mod mat3;
pub mod tape;

pub use adam::Adam;
pub use check::{check_gradient, check_gradient_coords, tape_objective, try_tape_objective, GradCheck};
pub use tape::{Gradients, Node, Op, Tape, Var};
