//! Shared numerical kernels: small dense SPD linear algebra, normal
//! distribution functions, one-dimensional quadrature, and seeded random
//! streams.
//!
//! Everything here is sized for the low-dimensional problems the rest of the
//! crate produces (d up to a few dozen); none of it tries to be a general
//! linear-algebra library.

mod matrix;
mod normal;
mod quadrature;
mod rng;

pub use matrix::{CholeskyFactor, SpdMatrix};
pub use normal::{erf, erfc, normal_cdf, normal_pdf, normal_quantile};
pub use quadrature::{
    adaptive_simpson, gauss_hermite, make_quadrature, truncate_support, ModelKind, QuadKind,
    QuadratureRule,
};
pub use rng::{mvn_sample, mvn_sample_with_factor, Rng};

use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    /// A Cholesky pivot was not strictly positive. The matrix is not
    /// positive definite, which downstream signals a degenerate covariance.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    /// An argument fell outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    DomainError(String),
    /// A quadrature rule was requested for a multivariate model that has no
    /// product or closed-form reduction.
    #[error("no quadrature rule for a {0}-dimensional non-Gaussian, non-empirical model")]
    UnsupportedDimension(usize),
}
