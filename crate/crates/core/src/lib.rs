//! Vertical collision-avoidance policy generation, compression into ReLU
//! networks, and exact verification of those networks against linearized
//! safeable regions.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`policy`] solves a notional MDP by backward induction on a grid.
//! 2. [`network`] compresses the table into one ReLU network per previous advisory.
//! 3. [`geometry`] builds safeable and unsafeable regions in (τ, h) space and
//!    slices them into linearly bounded queries.
//! 4. [`verifier`] decides each query with branch-and-bound over ReLU phases.
//! 5. [`pipeline`] enumerates queries, runs them in parallel and aggregates reports.

pub mod domain;
pub mod error;
pub mod geometry;
pub mod network;
pub mod pipeline;
pub mod policy;
pub mod verifier;

pub use domain::{Advisory, AdvisorySet, EncounterState};
pub use error::{Error, Result};
