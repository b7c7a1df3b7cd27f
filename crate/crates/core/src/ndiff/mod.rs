//! A small reverse-mode differentiation engine over dense matrices.
//!
//! A [`Tape`] is rebuilt for every forward pass. Leaves are either
//! constants or parameters borrowed from a [`ParamSet`]; calling
//! [`Tape::backward`] accumulates exact gradients into that set.

mod adam;
mod check;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use check::grad_check;
pub use params::{fan_in_uniform, ParamId, ParamSet};
pub use tape::{Tape, Var};
