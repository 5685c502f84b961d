#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constraints;
pub mod error;
pub mod game;
pub mod kinematics;
pub mod payoff;
pub mod scenario;
pub mod simulation;

pub use error::{Error, Result};
