//! Command-line front end: the flat-text experiment configuration and the
//! subcommand implementations that glue models, bases, inference, and the
//! sweep drivers to files on disk.

pub mod config;

pub use config::{
    BasisBlock, ConfigError, ConvergeBlock, ConvergeTarget, ExperimentConfig, ExternalFiles,
    InferBlock, IoBlock, Method, ModelBlock, ParametricBlock, TimeBlock,
};
