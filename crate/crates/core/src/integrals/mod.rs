//! Limiting moment and covariance integrals.
//!
//! Each pair or 4-block partition contributes a multiple integral of a
//! product of interval indicators. [`form`] builds those integrands
//! symbolically, [`mc`] evaluates them by Monte Carlo, [`grid`] by a
//! deterministic lattice sum, and [`assembly`] sums them into moments and
//! covariances.

pub mod assembly;
pub mod form;
pub mod grid;
pub mod mc;

pub use assembly::{
    covariance_terms, evaluate_terms, limit_covariance, limit_moment, limit_variance_polynomial,
    limit_word_covariance, limit_word_moment, wishart_limit_moment, wishart_surviving_partitions, word_coloring,
    word_covariance_terms, CovarianceTerm, Flavor, TermKind, DEFAULT_SAMPLES,
};
pub use form::{
    build_covariance_integrand, build_hankel_integrand, build_moment_integrand, build_wishart_integrand, resolve_delta,
    AffineForm, Base, CovariancePartition, Indicator, Integrand, SignVariant, Test,
};
pub use grid::{riemann_sum, GridRule};
pub use mc::{mc_evaluate, IntervalSet, MCEstimate, Region};
