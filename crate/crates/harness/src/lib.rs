//! Experiment harness: configuration, task and model files, and the
//! experiment protocols behind the `lll` command.

pub mod config;
pub mod descriptors;
pub mod error;
pub mod experiments;
pub mod io;
pub mod stats;
