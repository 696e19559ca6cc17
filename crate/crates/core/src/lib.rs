//! Single-site MIMO localization from CSI fingerprints.
//!
//! The pipeline synthesizes geo-tagged CSI ([`channel_sim`]), maps it to
//! angle-delay profiles ([`adp`]), optionally compresses the profiles with a
//! fully-connected autoencoder ([`autoencoder`]) and regresses the user's
//! coordinates with two Gaussian process models ([`gpr_core`],
//! [`gpr_train`]). [`pipeline`] ties the phases together and runs the
//! evaluation experiments.

// `!(x > 0.0)` is how NaN inputs get rejected alongside non-positive ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adp;
pub mod autoencoder;
pub mod channel_sim;
pub mod container;
pub mod dataset;
pub mod error;
pub mod gpr_core;
pub mod gpr_train;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
