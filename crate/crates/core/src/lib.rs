//! Automated scoring of spoken responses by attention fusion of audio and
//! transcript encoders.

pub mod analysis;
pub mod audio;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod text;
pub mod training;
