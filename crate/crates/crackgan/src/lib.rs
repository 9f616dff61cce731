//! File formats, checkpoints, reports and the command-line front end for the
//! crack detector in `crackgan-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod font;
pub mod gridboard;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
