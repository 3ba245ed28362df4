//! Model-free control of the oxygen excess ratio of a PEM fuel-cell air-feed
//! system.
//!
//! * [`params`]: physical parameters, the lumped model constants and
//!   parameter uncertainties.
//! * [`plant`]: the four-state air-feed model and its pressure sensors.
//! * [`mfc`]: ultra-local model, `F` estimator and iP controller.
//! * [`scenario`]: load profiles, excess ratio and its reference.
//! * [`sim`]: fixed-step closed-loop runs and settling metrics.
//! * [`config`], [`plan`], [`tune`]: file formats, batch runs, gain sizing.

// `!(a > b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod mfc;
pub mod params;
pub mod plan;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod tune;

pub use error::{Error, Result};
