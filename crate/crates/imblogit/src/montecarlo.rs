//! Monte Carlo validation harness: repeatedly sample majority data, fit the
//! logistic maximizer, and compare the spread of `sqrt(N)(beta_N -
//! beta_star)` against the limiting normal law via ECDF/KS statistics and
//! interval coverage.
//!
//! Replicate `r` always draws from the stream `(seed, r)`, and replicate
//! results are merged in replicate order, so a report is bit-identical for
//! a given config no matter how many threads run it.

use rayon::prelude::*;
use thiserror::Error;

use crate::asymptotics::{
    compute_covariance, confidence_interval, solve_beta_star, LimitError, LimitInference,
    SolveOptions,
};
use crate::distributions::{MajorityModel, MinoritySample};
use crate::logistic::{fit, FitOptions, LogisticData};
use crate::numerics::{normal_cdf, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    /// The limiting slope or covariance could not be computed, so there is
    /// nothing to standardize against.
    #[error("limit solve failed: {0}")]
    LimitSolveFailed(#[from] LimitError),
    /// An empirical distribution function needs at least one value.
    #[error("empty input")]
    EmptyInput,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Configuration of a simulation experiment.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub model: MajorityModel,
    pub minority: MinoritySample,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub theta: f64,
}

impl McConfig {
    fn validate(&self) -> Result<(), McError> {
        if self.replicates < 2 {
            return Err(McError::InvalidConfig(format!(
                "need at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if self.n_grid.is_empty() {
            return Err(McError::InvalidConfig("empty N grid".into()));
        }
        let n_minor = self.minority.len();
        if let Some(&bad) = self.n_grid.iter().find(|&&n| n < n_minor) {
            return Err(McError::InvalidConfig(format!(
                "majority size {bad} is smaller than the minority size {n_minor}"
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(McError::InvalidConfig(format!(
                "theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        if self.model.dim() != self.minority.dim() {
            return Err(McError::InvalidConfig(format!(
                "model dimension {} does not match minority dimension {}",
                self.model.dim(),
                self.minority.dim()
            )));
        }
        Ok(())
    }
}

/// Per-majority-size results of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct NRecord {
    pub majority_count: usize,
    /// Fitted slopes of the converged replicates, in replicate order.
    pub beta_draws: Vec<Vec<f64>>,
    /// `sqrt(N)(beta_N - beta_star)` per converged replicate.
    pub standardized: Vec<Vec<f64>>,
    /// KS distance of the whitened deviations against the standard normal;
    /// NaN when no replicate converged.
    pub ks: f64,
    /// Fraction of converged replicates whose slope fell inside the
    /// `1 - theta` interval.
    pub coverage: f64,
    /// Average of `N e^{alpha_N}` over converged replicates.
    pub mean_alpha_decay: f64,
    /// Replicates whose fit did not converge (separation at small N).
    pub failures: usize,
}

/// Full experiment output.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub inference: LimitInference,
    pub theta: f64,
    pub replicates: usize,
    pub seed: u64,
    pub per_n: Vec<NRecord>,
}

/// Runs the full replication experiment described by `config`.
///
/// For every `N` in the grid and every replicate `r`, samples `N` majority
/// points from stream `(seed, r)`, fits the logistic maximizer, and
/// aggregates standardized deviations, the KS distance against the limit
/// law, interval coverage, and the intercept decay statistic.
pub fn run_experiment(config: &McConfig) -> Result<McReport, McError> {
    config.validate()?;
    let xbar = config.minority.mean().to_vec();
    let beta_star = solve_beta_star(&config.model, &xbar, SolveOptions::default())?;
    let inference = compute_covariance(&config.model, &xbar, &beta_star)?;

    let per_n = config
        .n_grid
        .iter()
        .map(|&n_major| run_one_size(config, &inference, n_major))
        .collect();

    Ok(McReport {
        inference,
        theta: config.theta,
        replicates: config.replicates,
        seed: config.seed,
        per_n,
    })
}

fn run_one_size(config: &McConfig, inference: &LimitInference, n_major: usize) -> NRecord {
    let d = config.model.dim();
    // Replicates run in parallel; the indexed collect keeps replicate order,
    // so aggregation below is schedule-independent.
    let fits: Vec<Option<(Vec<f64>, f64)>> = (0..config.replicates)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = Rng::new(config.seed, replicate as u64);
            let majority = config.model.sample(n_major, &mut rng);
            let data = LogisticData::new(majority, config.minority.clone())
                .expect("validated config produces consistent data");
            fit(&data, FitOptions::default())
                .ok()
                .map(|result| (result.beta.clone(), result.scaled_intercept()))
        })
        .collect();

    let converged: Vec<&(Vec<f64>, f64)> = fits.iter().flatten().collect();
    let failures = config.replicates - converged.len();

    let beta_draws: Vec<Vec<f64>> = converged.iter().map(|(b, _)| b.clone()).collect();
    let sqrt_n = (n_major as f64).sqrt();
    let standardized: Vec<Vec<f64>> = beta_draws
        .iter()
        .map(|beta| {
            beta.iter()
                .zip(&inference.beta_star)
                .map(|(b, s)| sqrt_n * (b - s))
                .collect()
        })
        .collect();

    // Whiten with the Cholesky factor so every coordinate is standard
    // normal under the limit law, then pool coordinates for the KS
    // statistic. In 1D this is just division by sigma.
    let whitened: Vec<f64> = standardized
        .iter()
        .flat_map(|dev| inference.chol_a.solve_lower(dev))
        .collect();
    let ks = match ecdf(&whitened) {
        Ok(e) => ks_distance(&e, normal_cdf),
        Err(_) => f64::NAN,
    };

    let interval = confidence_interval(inference, n_major, config.theta);
    let covered = beta_draws
        .iter()
        .filter(|beta| interval.contains(beta))
        .count();
    let coverage = if beta_draws.is_empty() {
        f64::NAN
    } else {
        covered as f64 / beta_draws.len() as f64
    };

    let mean_alpha_decay = if converged.is_empty() {
        f64::NAN
    } else {
        converged.iter().map(|(_, s)| s).sum::<f64>() / converged.len() as f64
    };

    debug_assert!(beta_draws.iter().all(|b| b.len() == d));
    NRecord {
        majority_count: n_major,
        beta_draws,
        standardized,
        ks,
        coverage,
        mean_alpha_decay,
        failures,
    }
}

/// Per-N averages of `N e^{alpha_N}`, the quantity the surrounds condition
/// keeps bounded.
pub fn alpha_decay_scan(config: &McConfig) -> Result<Vec<(usize, f64)>, McError> {
    let report = run_experiment(config)?;
    Ok(report
        .per_n
        .iter()
        .map(|rec| (rec.majority_count, rec.mean_alpha_decay))
        .collect())
}

/// Empirical distribution function: a right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

/// Builds the ECDF of `values`.
pub fn ecdf(values: &[f64]) -> Result<Ecdf, McError> {
    if values.is_empty() {
        return Err(McError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Ecdf { sorted })
}

impl Ecdf {
    /// `F_hat(x)`: fraction of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Left limit `F_hat(x-)`: fraction of values `< x`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v < x);
        count as f64 / self.sorted.len() as f64
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Kolmogorov–Smirnov distance between an ECDF and a reference CDF.
///
/// Checks both sides of every jump; the left side evaluates the reference
/// just below the sample point, which agrees with the left limit for
/// continuous references and keeps atoms shared by both distributions from
/// inflating the distance.
pub fn ks_distance<F: Fn(f64) -> f64>(e: &Ecdf, cdf: F) -> f64 {
    let n = e.sorted.len() as f64;
    let mut sup = 0.0_f64;
    for (i, &x) in e.sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / n - cdf(x);
        let lo = i as f64 / n - cdf(x.next_down());
        sup = sup.max(hi.abs()).max(lo.abs());
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use approx::assert_abs_diff_eq;

    fn unit_gaussian_config(xbar: f64, n_grid: Vec<usize>, replicates: usize, seed: u64) -> McConfig {
        McConfig {
            model: MajorityModel::gaussian_1d(0.0, 1.0).unwrap(),
            minority: MinoritySample::single(vec![xbar]).unwrap(),
            n_grid,
            replicates,
            seed,
            theta: 0.05,
        }
    }

    #[test]
    fn ecdf_single_value_steps_at_that_value() {
        let e = ecdf(&[0.0]).unwrap();
        assert_eq!(e.eval(0.0), 1.0);
        assert_eq!(e.eval(-1e-12), 0.0);
        assert_eq!(e.eval_left(0.0), 0.0);
    }

    #[test]
    fn ecdf_counts_fractions() {
        let e = ecdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(e.eval(2.0), 2.0 / 3.0);
        assert_abs_diff_eq!(e.eval(0.5), 0.0);
        assert_abs_diff_eq!(e.eval(3.5), 1.0);
    }

    #[test]
    fn ecdf_rejects_empty_input() {
        assert_eq!(ecdf(&[]), Err(McError::EmptyInput));
    }

    #[test]
    fn ecdf_of_normal_draws_tracks_the_normal_cdf() {
        // DKW-style check at 1e4 draws.
        let mut rng = Rng::new(8, 0);
        let draws: Vec<f64> = (0..10_000).map(|_| rng.standard_normal()).collect();
        let e = ecdf(&draws).unwrap();
        assert!(ks_distance(&e, normal_cdf) < 0.03);
    }

    #[test]
    fn ks_of_point_mass_against_its_own_cdf_is_zero() {
        let e = ecdf(&[0.0]).unwrap();
        let point_mass = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
        assert_eq!(ks_distance(&e, point_mass), 0.0);
    }

    #[test]
    fn ks_two_points_against_normal_matches_enumeration() {
        let e = ecdf(&[-1.0, 1.0]).unwrap();
        let got = ks_distance(&e, normal_cdf);
        // Brute force over the four jump-side gaps.
        let candidates = [
            (0.5 - normal_cdf(-1.0)).abs(),
            (0.0 - normal_cdf(-1.0)).abs(),
            (1.0 - normal_cdf(1.0)).abs(),
            (0.5 - normal_cdf(1.0)).abs(),
        ];
        let expected = candidates.iter().fold(0.0_f64, |a, &b| a.max(b));
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.5 - normal_cdf(-1.0), epsilon = 1e-12);
    }

    #[test]
    fn ks_is_invariant_under_increasing_transforms() {
        let values = [-0.7, 0.1, 0.4, 1.3, 2.2];
        let base = ks_distance(&ecdf(&values).unwrap(), normal_cdf);
        // Exact rank-preserving rescale by a power of two.
        let doubled: Vec<f64> = values.iter().map(|v| 2.0 * v).collect();
        let scaled = ks_distance(&ecdf(&doubled).unwrap(), |x| normal_cdf(x / 2.0));
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-12);
        // Generic smooth monotone transform.
        let transformed: Vec<f64> = values.iter().map(|v| v.exp()).collect();
        let mapped = ks_distance(&ecdf(&transformed).unwrap(), |x: f64| normal_cdf(x.ln()));
        assert_abs_diff_eq!(base, mapped, epsilon = 1e-9);
    }

    #[test]
    fn identical_configs_produce_identical_reports() {
        let config = unit_gaussian_config(0.5, vec![50, 120], 2, 99);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replicate_counts_always_reconcile() {
        let config = unit_gaussian_config(2.2, vec![60], 40, 5);
        let report = run_experiment(&config).unwrap();
        for rec in &report.per_n {
            assert_eq!(rec.beta_draws.len() + rec.failures, config.replicates);
            assert_eq!(rec.beta_draws.len(), rec.standardized.len());
            if !rec.beta_draws.is_empty() {
                assert!((0.0..=1.0).contains(&rec.coverage));
                assert!(rec.ks >= 0.0 && rec.ks <= 1.0);
            }
        }
    }

    #[test]
    fn centered_minority_pipeline_passes_ks() {
        // xbar = 0 means beta_star = 0 and Sigma = 1; the standardized
        // draws should look standard normal.
        let config = unit_gaussian_config(0.0, vec![1000], 100, 2024);
        let report = run_experiment(&config).unwrap();
        assert_abs_diff_eq!(report.inference.beta_star[0], 0.0, epsilon = 1e-9);
        let rec = &report.per_n[0];
        assert_eq!(rec.failures, 0);
        assert!(rec.ks < 0.15, "ks = {}", rec.ks);
    }

    #[test]
    fn ks_improves_with_majority_size() {
        let mut wins = 0;
        for seed in 0..3 {
            let config = unit_gaussian_config(1.0, vec![100, 5000], 100, 7000 + seed);
            let report = run_experiment(&config).unwrap();
            if report.per_n[1].ks < report.per_n[0].ks {
                wins += 1;
            }
        }
        assert!(wins >= 2, "large N beat small N in only {wins}/3 seeds");
    }

    #[test]
    fn alpha_decay_stays_bounded() {
        use crate::distributions::surrounds_check;
        let config = unit_gaussian_config(0.0, vec![100, 200, 500, 1000, 5000], 20, 11);
        let table = alpha_decay_scan(&config).unwrap();
        let delta = surrounds_check(&config.model, &[0.0], 0.1, 2).worst_mass;
        let bound = 2.0 * config.minority.len() as f64 / delta;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for &(n, decay) in &table {
            assert!(decay > 0.0, "decay at N={n} is {decay}");
            assert!(decay < bound, "decay {decay} exceeds 2n/delta = {bound}");
            lo = lo.min(decay);
            hi = hi.max(decay);
        }
        // The statistic hovers around a constant; a factor of 3 is generous.
        assert!(hi / lo < 3.0, "alpha decay spread: [{lo}, {hi}]");
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut config = unit_gaussian_config(0.0, vec![100], 1, 0);
        assert!(matches!(
            run_experiment(&config),
            Err(McError::InvalidConfig(_))
        ));
        config.replicates = 10;
        config.n_grid = vec![];
        assert!(matches!(
            run_experiment(&config),
            Err(McError::InvalidConfig(_))
        ));
        config.n_grid = vec![100];
        config.theta = 1.5;
        assert!(matches!(
            run_experiment(&config),
            Err(McError::InvalidConfig(_))
        ));
    }

    #[test]
    fn unreachable_xbar_fails_the_limit_solve() {
        let config = McConfig {
            model: MajorityModel::empirical_1d(&[0.0, 1.0]).unwrap(),
            minority: MinoritySample::single(vec![2.0]).unwrap(),
            n_grid: vec![50],
            replicates: 4,
            seed: 0,
            theta: 0.05,
        };
        assert!(matches!(
            run_experiment(&config),
            Err(McError::LimitSolveFailed(_))
        ));
    }
}
