//! Cooperative precoder-feedback simulation for the FDD massive MIMO downlink.
//!
//! Users quantize and exchange channel state over device-to-device links,
//! compute their own downlink precoders, and feed back only a precoder index
//! to the base station. This crate provides the full experimental stack:
//!
//! - correlated (one-ring) and i.i.d. channel models  ([`channel`])
//! - random and covariance-shaped vector-quantization codebooks ([`codebooks`])
//! - subspace-projected Karhunen-Loeve CSI exchange with distortion-rate and
//!   entropy-coded scalar quantizer backends ([`exchange`])
//! - ZF / MMSE / SLNR precoders and codebook-constrained selection ([`precoding`])
//! - the water-filling bit-partition optimizer for the D2D budget ([`bitpartition`])
//! - closed-form interference bounds and extreme-value constants ([`analysis`])
//! - a reproducible Monte Carlo harness with per-trial RNG substreams ([`sim`])
//!
//! Parallel trial execution over rayon is enabled by the default `parallel`
//! feature; disabling it compiles a sequential fallback with identical output.

pub mod analysis;
pub mod bitpartition;
pub mod channel;
pub mod codebooks;
pub mod config;
pub mod error;
pub mod exchange;
pub mod linalg;
pub mod precoding;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

/// Complex double-precision scalar.
pub type C64 = num_complex::Complex64;
/// Dynamically-sized complex vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dynamically-sized complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
