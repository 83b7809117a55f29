//! Identification of blinking optical beacons in event-camera streams.
//!
//! Events are clustered into candidate targets, a layer of delay-tuned
//! spiking units estimates their motion, a Kalman tracker follows them and a
//! per-track decoder turns their blinking into 11-bit frames. [`pipeline::run`]
//! ties the stages together; [`events`] also provides a sensor simulator with
//! ground truth.

// Negated comparisons in parameter checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cluster;
pub mod error;
pub mod events;
pub mod flow;
pub mod pipeline;
pub mod protocol;
pub mod tracker;

pub use error::{Error, Result};
