//! Controllability analysis for N-link horizontal planar manipulators with
//! a single unactuated joint.
//!
//! The crate builds the chain dynamics, applies partial feedback
//! linearization to obtain a control-affine system, evaluates Lie brackets
//! both numerically (forward-mode dual numbers) and through closed forms,
//! and decides local accessibility and small-time local controllability
//! (STLC) via numerical rank of bracket distributions and good/bad bracket
//! bookkeeping.

pub mod accessibility;
pub mod config;
pub mod dual;
pub mod lie;
pub mod model;
pub mod pfl;
pub mod report;
pub mod stlc;
pub mod verify;

mod error;

pub use error::{Error, Result};
