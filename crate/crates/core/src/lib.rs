//! Core library for `bruq`: Born-rule unitary quantum experiments on labeled
//! composite systems.
//!
//! The crate models a laboratory as a composite of named finite-dimensional
//! subsystems (a measured system plus pointer/memory subsystems), runs
//! timestamped schedules of measurement, reset, and custom unitary events, and
//! answers probability queries three ways:
//!
//! * [`born`] evaluates multi-time queries by the Born rule where the queried
//!   records coexist, and returns an explicit indeterminate verdict where they
//!   do not (e.g. after a reset has erased a record).
//! * [`trajectories`] supplements the quantum state with an actual basis
//!   configuration evolving under pluggable dynamics rules, and estimates the
//!   same queries by Monte Carlo over trajectory readouts.
//! * [`guidance`] is a 1D continuum demonstrator: two non-overlapping wave
//!   packets evolved by a split-step spectral method, with guided trajectories
//!   integrated along the probability-current velocity field.
//!
//! Experiments can be built in code ([`lab`]) or written in a small text
//! format ([`edl`]).

pub mod born;
pub mod edl;
mod error;
pub mod guidance;
pub mod hilbert;
pub mod lab;
pub mod rng;
pub mod stats;
pub mod trajectories;

pub use error::{Error, Result};
pub use lab::Time;
