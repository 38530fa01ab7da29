//! File formats, configuration and the command-line pipeline around
//! [`rangecast_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod pipeline;

pub use error::{CliError, CliResult};
