//! File formats, run configuration and command implementations behind the
//! `gma3d` binary.

pub mod commands;
pub mod container;
pub mod report;
pub mod runconfig;
pub mod scene_io;

pub use commands::{CliError, CliResult};
pub use container::TensorContainer;
pub use runconfig::RunConfig;
