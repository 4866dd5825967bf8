//! Latency minimization for cache-aided fog radio access networks.
//!
//! The crate models a downlink where edge radio heads (eRRHs) serve multicast
//! groups from local caches, from a capacity-limited fronthaul, or both, and
//! provides convex successive-approximation schemes that minimize delivery
//! latency. Each scheme lowers its nonconvex problem to a sequence of convex
//! subproblems ([`ir::SubproblemIr`]) solved by an interior-point method
//! ([`solver`]).

pub mod cli;
pub mod error;
pub mod experiments;
pub mod ir;
pub mod linalg;
pub mod model;
pub mod schemes;
pub mod solver;

pub use error::{Error, Result};
