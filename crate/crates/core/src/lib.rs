//! Joint device-activity detection and embedded-information-bit (EIB)
//! decoding for grant-free random access in massive MIMO.
//!
//! The crate is split along the simulation pipeline:
//!
//! * [`config`]: scenario parameters and the key-value config format.
//! * [`model`]: users, channels, Bernoulli pilots and the received signal.
//! * [`denoise`]: the spike-and-Gaussian MMSE denoiser and the paired
//!   (M-AMP) denoiser that exploits the one-pilot-per-user structure.
//! * [`amp`]: the AMP recursion with Onsager correction and its state evolution.
//! * [`detect`]: activity thresholds, bit decisions and error counting.
//! * [`experiments`]: Monte Carlo trials, sweeps, calibration and CSV output.

pub mod amp;
pub mod config;
pub mod denoise;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
