//! Fault-tolerant computation with noisy neurons.
//!
//! Values are carried by grid-coded phase populations, processed in
//! codespace, and periodically error-corrected by a decode/re-encode pair of
//! physical neuron layers. On top of the logical neurons sits a digital
//! fault-tolerance layer (NAND multiplexing), and the experiment harness
//! measures logical error rates across the `(p, σ)` noise plane.

pub mod circuits;
pub mod cli;
pub mod digital_ft;
pub mod experiments;
pub mod gridcode;
pub mod neural;
pub mod noise;
