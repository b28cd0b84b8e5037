//! Agent-based residential choice for renter households: a synthetic population,
//! per-household multi-objective option search, a monthly capacity-constrained housing
//! market, and transport scenarios compared against a baseline.

mod csvout;
mod error;
pub mod geometry;
pub mod market;
pub mod objectives;
pub mod optimizer;
pub mod population;
pub mod scenario;
pub mod seed;
pub mod synthcity;
pub mod world;

pub use error::{Error, Result};
