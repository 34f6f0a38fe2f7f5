//! File formats, parallel drivers and the `drail` command line around
//! [`drail_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod exec;
pub mod manifest;
pub mod report;

pub use error::{Error, Result};
