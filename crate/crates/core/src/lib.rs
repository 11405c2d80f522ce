//! Linear regions of ReLU graph convolutional networks: closed-form bounds,
//! exact counting by hyperplane-arrangement refinement, Monte Carlo
//! estimation, an explicit lower-bound construction and figure/table
//! rendering.

pub mod arrangement;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod lp;
pub mod render;
pub mod sampler;
pub mod witness;

pub use error::{Error, Result};
