//! Simulation and analysis of phase-stabilized twin-field QKD fiber links.
//!
//! The pipeline runs noise synthesis → link composition → feedback control →
//! interference → detection → statistics, driven by TOML scenario files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod detect;
pub mod error;
pub mod interference;
pub mod link;
pub mod noise;
pub mod scenario;

pub use error::{Error, Result};
