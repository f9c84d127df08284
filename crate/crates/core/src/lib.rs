//! Biometric key generation from free-text keystroke dynamics.
//!
//! The crate is organized bottom-up:
//!
//! * [`features`] turns keystroke logs into discretized feature vectors.
//! * [`spc`] is the scaled parity code over `Z_{2^d}` with its Lee-metric decoder.
//! * [`commitment`] binds a random codeword to a biometric template and derives keys.
//! * [`lda`] is plaintext linear discriminant analysis.
//! * [`he`] is the additively homomorphic encryption layer.
//! * [`pplda`] is the three-party enrollment protocol that lets a matrix publisher
//!   compute population LDA parameters without seeing individual templates.
//! * [`eval`] generates synthetic populations and measures FAR/FRR, availability,
//!   entropy and protocol cost.

pub mod commitment;
pub mod error;
pub mod eval;
pub mod features;
pub mod he;
pub mod lda;
pub mod pplda;
pub mod spc;

pub use error::{Error, Result};
