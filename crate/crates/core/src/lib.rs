//! Graph convolutional networks trained with backpropagation or direct
//! feedback alignment, plus the tooling to compare the two.

pub mod bp;
pub mod cli;
pub mod dataset;
pub mod dfa;
pub mod diagnostics;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod numkit;
pub mod optim;
pub mod pseudo_error;
pub mod training;

pub use error::{Error, Result};
