//! Tracklet association unsupervised deep learning on a synthetic
//! multi-camera world.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod manifest;
pub mod model;
pub mod optim;
pub mod plot;
pub mod seed;
pub mod sstt;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
