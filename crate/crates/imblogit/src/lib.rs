//! Asymptotic inference for logistic regression slopes when one class is
//! vastly larger than the other.
//!
//! When the majority class grows without bound while the minority class stays
//! finite, the logistic slope converges to the exponential-tilt parameter
//! `beta_star` that shifts the majority distribution's mean onto the minority
//! mean. The fluctuation around that limit is asymptotically normal with a
//! sandwich covariance `Sigma = H^-1 V H^-T` built from tilted second
//! moments. This crate computes the limit, the covariance, confidence
//! intervals, and majority-class sample-size requirements, and ships a seeded
//! Monte Carlo harness that checks the normal approximation empirically.
//!
//! Modules:
//! - [`numerics`]: small dense SPD linear algebra, normal distribution
//!   functions, quadrature, and reproducible random streams.
//! - [`distributions`]: majority-class models (Gaussian, empirical, generic
//!   1D density) with exponentially tilted moment queries and sampling.
//! - [`logistic`]: the finite-sample maximizer of the centered log-loss via
//!   damped Newton iteration.
//! - [`asymptotics`]: the limiting slope, sandwich covariance, confidence
//!   intervals, and sample-size planning.
//! - [`montecarlo`]: replicated simulation experiments with ECDF/KS and
//!   coverage summaries.
//! - [`cli`]: command-line driver with CSV/JSON reporting.

pub mod asymptotics;
pub mod cli;
pub mod distributions;
pub mod logistic;
pub mod montecarlo;
pub mod numerics;
