//! Dual-region observation augmentation for imitation-learning datasets,
//! a desk-scale behavior-cloning benchmark, and the absolute RND gap metric.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function
//! of its inputs and seeds; file formats, parallel drivers and the command
//! line live in the `drail` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod arg;
pub mod augment;
pub mod bench;
pub mod dataset;
mod error;
pub mod fractal;
pub mod image;
mod math;
pub mod nn;
pub mod propagate;
pub mod rng;
pub mod saliency;
pub mod stats;

pub use error::{Error, Result};
pub use image::{Image, Mask};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
