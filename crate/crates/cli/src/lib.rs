//! Experiment drivers over the solver crate: configuration, canonical CSV
//! output, and one runner per experiment verb.

pub mod config;
pub mod csvout;
pub mod runners;
