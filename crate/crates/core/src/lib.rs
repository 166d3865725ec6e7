//! Wave-packet transport for one-dimensional discrete Schrödinger operators
//! `(Hψ)(n) = ψ(n+1) + ψ(n−1) + W(n)ψ(n)`.
//!
//! The crate covers potential families, truncated Hamiltonians, the
//! transfer-matrix cocycle, the Fibonacci trace map, time-averaged dynamics and
//! the exponent bounds and fits built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod exponents;
pub mod lattice;
pub mod numerics;
pub mod potentials;
pub mod tracemap;
pub mod transfer;

pub use error::{Error, Result};
pub use lattice::{PotentialSpec, WavePacket};
pub use transfer::TransferMatrix;

/// Library version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
