//! Decentralized consensus ADMM solvers for networks of agents: exact and
//! inexact consensus ADMM for a shared variable, and their dual-consensus
//! counterparts for block variables under a linear coupling constraint.

pub mod consensus;
pub mod dual;
pub mod error;
pub mod graph;
pub mod harness;
pub mod inner;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod problem;

pub use error::{Error, Result};
