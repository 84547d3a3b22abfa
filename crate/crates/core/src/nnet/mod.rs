//! Minimal differentiable numeric core.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Graph, Var};
pub use layers::{dropout, feed_forward, sinusoidal_positions, word_dropout, FeedForwardVars};
pub use params::ParamStore;
pub use tensor::Tensor;
