//! Classical learning of shallow quantum circuits and states from randomized
//! product-basis measurements, with a dense state-vector simulator as oracle.
//!
//! Qubit ordering convention used everywhere: qubits are indexed ascending,
//! and qubit 0 is the most significant bit of an amplitude index. A gate on
//! the ordered pair (a, b) uses row/column index `2*bit_a + bit_b`.

pub mod channel;
pub mod circuit;
pub mod coloring;
pub mod dataset;
pub mod dense;
pub mod dist;
pub mod epsnet;
pub mod error;
pub mod geometry;
pub mod heisenberg;
pub mod landscape;
pub mod linalg;
pub mod obs;
pub mod pauli;
pub mod pipelines;
pub mod sew;
pub mod stab;
pub mod state;
pub mod statelearn;
pub mod synth;
pub mod verify;

pub use error::SclError;

/// Dense-simulation qubit cap; raised via the `SCL_DENSE_CAP` env var.
pub fn dense_cap() -> usize {
    std::env::var("SCL_DENSE_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(14)
}
