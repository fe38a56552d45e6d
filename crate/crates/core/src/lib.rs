//! Linear-in-means peer effects on random networks: graph machinery, the
//! data-generating process, IV estimation with network-HAC variances,
//! weak-instrument-robust inference, analytic bounds and a Monte Carlo driver.

pub mod error;
pub mod graph;
pub mod stats;
pub mod dgp;
pub mod estimate;
pub mod weakiv;
pub mod theory;
pub mod montecarlo;

pub use error::{Error, Result};
