//! Minimal layer graph with hand-written backward passes.

mod adam;
mod graph;
mod kernels;
mod spec;

pub use adam::{Adam, AdamConfig};
pub use graph::{Grads, Graph, InputContract, Mode, Node, Param, Tape};
pub use spec::{names as spec_names, receptive_field, LayerKind, LayerSpec, ReceptiveField};
