//! Dual-channel sub-Nyquist multi-tone parameter estimation.
//!
//! The crate is `no_std` (with `alloc`). It covers ground-truth synthesis of
//! signal and time-derivative channels, closed-form and numerical bounds,
//! the amplitude-ratio estimator with Nyquist-fold disambiguation, an OMP
//! grid baseline, and the pure parts of the Monte-Carlo harness.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod omp;
pub mod signal;
pub mod sngem;

pub use error::{Error, Result};
