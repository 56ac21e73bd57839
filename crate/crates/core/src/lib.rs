//! Deep supervised hashing: a small CNN stack, the exponentiated
//! code-product loss with its smoothed bitwise surrogate, three-stage
//! training, shallow hashing baselines and Hamming-ranking evaluation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common choices.

pub mod baselines;
pub mod bitcode;
pub mod dataio;
pub mod error;
pub mod evalrank;
pub mod hashloss;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod supervision;
pub mod tensor;
pub mod trainer;

pub use bitcode::BitCode;
pub use error::{Error, ErrorClass, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use supervision::{Similarity, SimilarityOracle};
pub use tensor::Tensor;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Network64 = network::Network<f64>;
pub type Network32 = network::Network<f32>;
pub type Dataset64 = dataio::LabeledDataset<f64>;
pub type Dataset32 = dataio::LabeledDataset<f32>;
