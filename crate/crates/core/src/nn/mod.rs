//! Small multilayer perceptrons with exact input jets and parameter gradients.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod network;

pub use activation::Activation;
pub use adam::{adam_step, AdamState};
pub use network::{Jet2, Network, NetworkSpec, OutputTransform, SamplePoint};
