//! File formats, parallel sweep execution and plotting on top of
//! `subnyq-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod runner;
pub mod sweep_syntax;

pub use error::{CliError, Result};
