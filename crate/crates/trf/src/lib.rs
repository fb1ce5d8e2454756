//! Ternary random features: data-dependent moment matching of a ternary
//! weight/activation scheme to arbitrary random-features kernels, with
//! bit-packed multiplication-free feature computation and the spectral
//! verification harness around it.
//!
//! Start with the runnable examples (`cargo run --release --example ...`)
//! or the `trf` binary for the subcommand pipelines.

pub mod equivalent;
pub mod error;
pub mod cli;
pub mod data;
pub mod linalg;
pub mod kernels;
pub mod moments;
pub mod opcount;
pub mod regression;
pub mod rng;
pub mod spectral;
pub mod ternary;

pub use error::{Result, TrfError};
