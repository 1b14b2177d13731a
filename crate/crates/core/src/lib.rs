//! Simulation and local-oscillator tomography of single-photon
//! path-entangled states on truncated Fock spaces.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counting;
pub mod detection;
pub mod error;
pub mod events;
pub mod fock;
pub mod models;
pub mod pipeline;
pub mod simulate;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64;
