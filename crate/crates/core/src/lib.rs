//! Tabular offline RL laboratory for zero-reward relabeling of unlabeled
//! data, conservative data sharing, and exact evaluation of the associated
//! policy-improvement bounds.

pub mod bounds;
pub mod data;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod relabel;
pub mod solver;

pub use error::{Error, Result};
