//! Monte-Carlo simulator for anchor-assisted cascaded channel estimation in
//! extremely large IRS systems with double-sided visibility regions.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod runner;

pub use error::{Error, Result};
