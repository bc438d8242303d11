//! Reproducible random streams and multivariate normal sampling.
//!
//! A stream is addressed by `(seed, stream_index)`; the same address always
//! replays the same sequence, so replicated experiments can hand stream `r`
//! to replicate `r` and stay deterministic under any execution order.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{CholeskyFactor, SpdMatrix};
use super::normal::normal_quantile;
use super::NumericsError;

/// A seeded, stream-addressable random number generator.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits, offset by half an ulp so 0 and 1 are
        // excluded; keeps inverse-CDF transforms finite.
        let bits = self.inner.gen::<u64>() >> 11;
        (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw by inverse-CDF transform.
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform()).expect("uniform draw is strictly inside (0,1)")
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.gen_range(0..n)
    }
}

/// One draw from `N(mean, cov)` as `mean + L z` with `L L^T = cov`.
///
/// Factorizes `cov` on every call; use [`mvn_sample_with_factor`] in loops.
pub fn mvn_sample(mean: &[f64], cov: &SpdMatrix, rng: &mut Rng) -> Result<Vec<f64>, NumericsError> {
    let chol = cov.cholesky()?;
    Ok(mvn_sample_with_factor(mean, &chol, rng))
}

/// One draw from `N(mean, L L^T)` given the Cholesky factor `L`.
pub fn mvn_sample_with_factor(mean: &[f64], chol: &CholeskyFactor, rng: &mut Rng) -> Vec<f64> {
    debug_assert_eq!(mean.len(), chol.dim());
    let z: Vec<f64> = (0..chol.dim()).map(|_| rng.standard_normal()).collect();
    let lz = chol.mul_vec(&z);
    mean.iter().zip(lz).map(|(m, v)| m + v).collect()
}
