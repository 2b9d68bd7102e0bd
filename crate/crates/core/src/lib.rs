//! Slide FFT on a simulated homogeneous mesh of processing elements.
//!
//! - [`fft_core`]: serial radix-2 transform, permutation tables, twiddles and
//!   the brute-force DFT used as the correctness oracle.
//! - [`mesh_sim`]: a 2D grid of PEs with bounded local memory, a synchronous
//!   Slide primitive and a cycle ledger.
//! - [`slide_fft`]: the distributed transform over a one-row wave of `2^k` PEs.
//! - [`perf_model`]: closed-form efficiency model and reconciliation helpers.

pub mod fft_core;
pub mod mesh_sim;
pub mod perf_model;
pub mod slide_fft;

pub use num_complex::{Complex32, Complex64};
