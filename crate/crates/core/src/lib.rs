//! Session-based next-item recommendation with user-context augmentation.
//!
//! A GRU session model and a product-based context encoder are pretrained
//! separately with the TOP1 ranking loss over session-parallel mini-batches.
//! Both are then frozen and a merge layer learns to score items from the
//! concatenation of the encoder's contextual preference and the GRU hidden
//! state.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, ingestion
//! and the command-line front end live in the `arnn` crate.
#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod batch;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod nn;
pub mod param;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{softmax, Graph, Var};
pub use param::Parameter;
pub use tensor::Tensor;
