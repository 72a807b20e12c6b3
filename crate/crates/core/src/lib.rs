//! Online stochastic max-weight bipartite matching: an LP relaxation that
//! upper-bounds the best online policy, a two-pick rounding of it, exact
//! oracles for small instances, a Monte-Carlo harness and a reduction from
//! stochastic SAT.
//!
//! Indices are 0-based throughout the API. Human-facing output (reports,
//! LP variable names, traces) uses 1-based numbering.

pub mod assignment;
pub mod error;
pub mod instance;
pub mod lp;
pub mod montecarlo;
pub mod oracle;
pub mod par;
pub mod policy;
pub mod ssat;

pub use error::{Error, Result};
pub use instance::{AnyInstance, Ball, GeneralBall, GeneralInstance, Instance, Realization};
pub use lp::{EdgeValues, LpSolution};
pub use par::Execution;
pub use policy::{PolicyConfig, PreparedPolicy};
