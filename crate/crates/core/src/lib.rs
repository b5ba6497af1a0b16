//! Desk-scale miniature car racing: simulator, synthetic camera, PPO teacher
//! training, and randomized teacher-to-student distillation.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod agent;
pub mod config;
pub mod distill;
pub mod error;
pub mod eval;
pub mod nn;
pub mod parallel;
pub mod ppo;
pub mod randomize;
pub mod render;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
