//! Core of the crack-patch-only (CPO) adversarial crack detector.
//!
//! Everything in this crate is a pure function of its inputs and seeds:
//! synthetic pavement generation, morphology, the network graphs and their
//! hand-written backward passes, the loss terms, the training loops, full-image
//! inference and the evaluation metrics. File formats, checkpoints and the CLI
//! live in the `crackgan` companion crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod image;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod postprocess;
pub mod real;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use image::{GrayImage, GtMask};
pub use real::Real;
pub use tensor::Tensor;
