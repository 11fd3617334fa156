//! Feed-forward spiking networks built from adaptive leaky integrate-and-fire
//! (AdLIF+) neurons joined by synapses with trainable real-valued delays,
//! trained with hand-written backpropagation through time.
//!
//! Layout follows the data flow: [`data`] turns event files into binned
//! tensors, [`network`] runs the forward pass on top of [`neuron`] and
//! [`delay`], [`training`] differentiates and optimizes it, and [`analysis`]
//! produces the regime map, spike statistics and parameter exports.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod delay;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod network;
pub mod neuron;
pub mod seed;
pub mod surrogate;
pub mod training;

pub use error::{Error, Result};
pub use network::{network_forward, Mode, Network, NetworkConfig};
