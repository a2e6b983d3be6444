//! Multibeam satellite forward-link simulation and resource allocation.
//!
//! The crate is organised by subsystem:
//!
//! * [`scenario`] - beam geometry, link budget and channel synthesis.
//! * [`precoding`] - multicast MMSE precoding and its evaluators.
//! * [`access`] - two-user interference-channel strategies and rate regions.
//! * [`detection`] - onboard energy detectors for uplink interference.
//! * [`predistortion`] - jittered sampling, SPD, cubic HPA and the payload chain.
//! * [`cognitive`] - SINR matrices and Hungarian carrier assignment.
//! * [`caching`] - Zipf popularity and broadcast/unicast threshold selection.
//!
//! Monte Carlo loops go through [`par`], which runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iterators otherwise.
//! Every trial draws from its own counter-based stream (see [`rng`]), so
//! results do not depend on thread count or scheduling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod access;
pub mod caching;
pub mod cognitive;
pub mod detection;
pub mod error;
pub mod linalg;
pub mod par;
pub mod precoding;
pub mod predistortion;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64;
