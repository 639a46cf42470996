//! Private release of one-way marginals.
//!
//! A database is an `n × d` matrix of ±1 entries; its one-way marginals are the
//! `d` column means. This crate provides:
//!
//! - baseline Laplace and Gaussian releases and the L∞-exponential mechanism
//!   ([`mechanisms`]),
//! - an adaptive sparse-vector engine ([`sparse_vector`]) and the
//!   Gaussian-plus-sparse-vector worst-case-error release built on it
//!   ([`gauss_sv`]),
//! - a Tardos-style L1 fingerprinting code ([`fingerprinting`]) and the
//!   tracing / packing attacks that use it ([`attacks`]),
//! - closed-form sample-complexity bounds ([`bounds`]) and a seeded
//!   experiment CLI ([`cli`]).
//!
//! All randomness is drawn from explicitly seeded [`rng::DetRng`] streams so
//! every experiment can be replayed bit-for-bit.

pub mod attacks;
pub mod bounds;
pub mod cli;
pub mod database;
pub mod error;
pub mod fingerprinting;
pub mod format;
pub mod gauss_sv;
pub mod marginals;
pub mod mechanisms;
pub mod numeric;
pub mod params;
pub mod rng;
pub mod sparse_vector;

pub use database::{Database, Dataset};
pub use error::{Error, Result};
pub use marginals::{compute_marginals, l1_error, linf_error, MarginalVector};
pub use params::{group_privacy, AccuracyParams, GroupPrivacyParams, PrivacyParams};
pub use rng::DetRng;
