//! File formats, parallel gradients and the `growformer` command line for
//! [`growformer_core`].

pub mod backend;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod output;

pub use growformer_core as core;
