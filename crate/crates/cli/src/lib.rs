//! IO companion to `mgthash-core`: corpus and model file formats, the flat
//! key-value pipeline configuration, and the command implementations behind
//! the `mgthash` binary.

pub mod config;
pub mod formats;
pub mod pipeline;
