//! Relax-and-round unit commitment (RRUC).
//!
//! Sub-hourly unit commitment with minimum-runtime, daily-start and ramping
//! constraints. Each period the binary commitment variables are relaxed to
//! `[0, 1]`, the relaxed problem is solved to first-order stationarity, units
//! are ordered by their relaxation scores and a sweep of economic dispatches
//! over ordered prefixes picks the cheapest feasible commitment.

pub mod bench;
pub mod cli;
pub mod config;
pub mod demand;
pub mod dispatch;
pub mod error;
pub mod fleet;
pub mod oracle;
pub mod ramp;
pub mod relaxation;
pub mod replay;
pub mod rounding;
pub mod runtime;
pub mod sim;

pub use error::{Error, Result};
