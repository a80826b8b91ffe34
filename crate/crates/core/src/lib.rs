//! Analysis and simulation toolkit for reset controllers under sensor
//! quantization.
//!
//! A reset controller is a linear controller whose state jumps (typically a
//! partial zeroing) whenever its input crosses a trigger condition. This crate
//! provides:
//!
//! - dense state-space primitives and discretizations ([`linear`]),
//! - standard reset elements and a reset PID builder ([`elements`]),
//! - sinusoidal-input describing functions, with and without a reset band,
//!   plus an independent time-domain cross-check ([`df`]),
//! - quadratic stability certificates for reset loops ([`stability`]),
//! - a quantized closed-loop simulator and steady-state sensitivity sweeps
//!   ([`sim`]),
//! - reset-band width tuning from noise and reference budgets ([`tuning`]).

pub mod df;
pub mod elements;
pub mod error;
pub mod linear;
pub mod sim;
pub mod stability;
pub mod tuning;

pub use error::{Error, Result};
