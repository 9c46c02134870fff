//! Fluctuations of linear spectral statistics of random band Toeplitz and
//! related structured matrices.
//!
//! * [`partitions`]: pair, crossing and 4-block partitions with sign rules.
//! * [`integrals`]: limiting moments and covariances as partition integrals.
//! * [`ensembles`]: random band Toeplitz, Hankel, Hermitian, sparse,
//!   Wishart-type and multi-matrix operators.
//! * [`statistics`]: trace powers, centred statistics and summaries.

pub mod ensembles;
pub mod error;
pub mod integrals;
pub mod partitions;
pub mod rng;
pub mod statistics;

pub use error::{Error, Result};
