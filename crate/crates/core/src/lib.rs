// Guards of the form `!(x > 0.0)` are deliberate: they reject NaN along
// with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Event-driven simulation of an open two-half billiard with a freely
//! rotating central disk, coupled to two Gibbs heat reservoirs on the outer
//! boundary, plus the statistical instrumentation used to measure
//! regeneration times, compact-set hitting times, heavy-tailed free-flight
//! statistics and reservoir heat flux.

pub mod dynamics;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod observables;
pub mod oracles;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod vec2;

pub use error::{Error, Result};
