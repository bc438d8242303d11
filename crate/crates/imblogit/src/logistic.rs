//! Finite-sample logistic regression by damped Newton ascent on the
//! centered log-loss.
//!
//! The loss is parameterized around the minority mean `xbar`:
//!
//! ```text
//! L(a, b) = n a - sum_j log(1 + e^{a + b.(x_j - xbar)})
//!               - sum_i log(1 + e^{a + b.(x_i - xbar)})
//! ```
//!
//! with `j` ranging over the `n` minority points and `i` over the `N`
//! majority points. Centering makes the intercept absorb the class
//! imbalance: the linear minority term collapses to `n a` because `xbar`
//! is exactly the minority mean.

use thiserror::Error;

use crate::distributions::MinoritySample;
use crate::numerics::{NumericsError, SpdMatrix};

/// Norm threshold beyond which the slope is treated as diverging to a
/// separating hyperplane.
const SEPARATION_NORM: f64 = 1e3;

/// Maximum step halvings before the line search gives up.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    /// The slope norm blew up or the Hessian collapsed; the classes are
    /// likely linearly separable, so no finite maximizer exists.
    #[error(
        "separation suspected (|beta| = {beta_norm:.3e}): the classes may be linearly \
         separable, so the maximizer need not exist"
    )]
    SeparationSuspected { beta_norm: f64 },
    /// Newton failed to reach the gradient tolerance within the iteration
    /// budget.
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },
    /// The data violated a structural requirement.
    #[error("invalid data: {0}")]
    InvalidData(String),
}

/// A labelled data set in centered coordinates.
#[derive(Debug, Clone)]
pub struct LogisticData {
    majority: Vec<Vec<f64>>,
    minority: MinoritySample,
    /// The loss is always expressed around the minority mean.
    pub centered: bool,
}

impl LogisticData {
    pub fn new(majority: Vec<Vec<f64>>, minority: MinoritySample) -> Result<Self, FitError> {
        if majority.is_empty() {
            return Err(FitError::InvalidData(
                "need at least one majority observation".into(),
            ));
        }
        let dim = minority.dim();
        for x in &majority {
            if x.len() != dim {
                return Err(FitError::InvalidData(format!(
                    "majority point has dimension {}, minority has {}",
                    x.len(),
                    dim
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FitError::InvalidData(
                    "majority features must be finite".into(),
                ));
            }
        }
        Ok(Self {
            majority,
            minority,
            centered: true,
        })
    }

    pub fn majority(&self) -> &[Vec<f64>] {
        &self.majority
    }

    pub fn minority(&self) -> &MinoritySample {
        &self.minority
    }

    pub fn dim(&self) -> usize {
        self.minority.dim()
    }

    pub fn majority_count(&self) -> usize {
        self.majority.len()
    }

    pub fn minority_count(&self) -> usize {
        self.minority.len()
    }

    fn xbar(&self) -> &[f64] {
        self.minority.mean()
    }

    /// Applies `f` to the logit of every point (minority and majority).
    fn for_each_logit(&self, alpha: f64, beta: &[f64], mut f: impl FnMut(f64, &[f64])) {
        let xbar = self.xbar();
        for x in self.minority.points().iter().chain(self.majority.iter()) {
            let mut z = alpha;
            for k in 0..beta.len() {
                z += beta[k] * (x[k] - xbar[k]);
            }
            f(z, x);
        }
    }
}

/// The fitted maximizer and its convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Intercept in centered coordinates.
    pub alpha: f64,
    /// Slope vector.
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Majority count.
    pub majority_count: usize,
    /// Minority count.
    pub minority_count: usize,
}

impl FitResult {
    /// `N e^{alpha}`, the quantity whose boundedness reflects the intercept
    /// decay rate `e^{alpha} <= 2n/(N delta)` under the surrounds condition.
    pub fn scaled_intercept(&self) -> f64 {
        self.majority_count as f64 * self.alpha.exp()
    }
}

/// Options for [`fit`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Whether the projection onto `beta` puts every minority point strictly
/// above every majority point; if so the two classes are linearly separable
/// and the log-loss has no finite maximizer.
fn strictly_separates(data: &LogisticData, beta: &[f64]) -> bool {
    if beta.iter().all(|&b| b == 0.0) {
        return false;
    }
    let project = |x: &[f64]| x.iter().zip(beta).map(|(v, b)| v * b).sum::<f64>();
    let min_minority = data
        .minority
        .points()
        .iter()
        .map(|x| project(x))
        .fold(f64::INFINITY, f64::min);
    let max_majority = data
        .majority
        .iter()
        .map(|x| project(x))
        .fold(f64::NEG_INFINITY, f64::max);
    min_minority > max_majority
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic sigmoid, stable on both tails.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The centered log-loss `L(alpha, beta)`.
pub fn log_loss(data: &LogisticData, alpha: f64, beta: &[f64]) -> f64 {
    let mut loss = data.minority_count() as f64 * alpha;
    data.for_each_logit(alpha, beta, |z, _| loss -= softplus(z));
    loss
}

/// Analytic gradient of the loss in `(alpha, beta)`, length `d + 1` with the
/// intercept derivative first.
pub fn gradient(data: &LogisticData, alpha: f64, beta: &[f64]) -> Vec<f64> {
    let d = beta.len();
    let xbar = data.xbar();
    let mut g = vec![0.0; d + 1];
    g[0] = data.minority_count() as f64;
    data.for_each_logit(alpha, beta, |z, x| {
        let s = sigmoid(z);
        g[0] -= s;
        for k in 0..d {
            g[k + 1] -= s * (x[k] - xbar[k]);
        }
    });
    g
}

/// Analytic Hessian of the loss in `(alpha, beta)`; symmetric negative
/// semidefinite, `(d+1) x (d+1)` with the intercept row/column first.
pub fn hessian(data: &LogisticData, alpha: f64, beta: &[f64]) -> Vec<Vec<f64>> {
    let d = beta.len();
    let xbar = data.xbar();
    let mut h = vec![vec![0.0; d + 1]; d + 1];
    data.for_each_logit(alpha, beta, |z, x| {
        let s = sigmoid(z);
        let w = s * (1.0 - s);
        h[0][0] -= w;
        for k in 0..d {
            let ck = x[k] - xbar[k];
            h[k + 1][0] -= w * ck;
            for l in 0..=k {
                h[k + 1][l + 1] -= w * ck * (x[l] - xbar[l]);
            }
        }
    });
    for k in 0..=d {
        for l in (k + 1)..=d {
            h[k][l] = h[l][k];
        }
    }
    h
}

/// Maximizes the centered log-loss by damped Newton ascent from
/// `alpha = log(n/N)`, `beta = 0`.
pub fn fit(data: &LogisticData, options: FitOptions) -> Result<FitResult, FitError> {
    fit_with_trace(data, options).map(|(result, _)| result)
}

/// Same as [`fit`] but also returns the loss after every accepted step, for
/// monotone-ascent checks.
pub(crate) fn fit_with_trace(
    data: &LogisticData,
    options: FitOptions,
) -> Result<(FitResult, Vec<f64>), FitError> {
    let d = data.dim();
    let n = data.minority_count() as f64;
    let big_n = data.majority_count() as f64;

    let mut alpha = (n / big_n).ln();
    let mut beta = vec![0.0; d];
    let mut loss = log_loss(data, alpha, &beta);
    let mut trace = vec![loss];

    for iteration in 0..options.max_iter {
        let g = gradient(data, alpha, &beta);
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let beta_norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm < options.tol {
            // A saturated logit surface can push the gradient under the
            // tolerance at moderate |beta| even when no finite maximizer
            // exists. If the fitted direction strictly separates the
            // classes, the likelihood is unbounded along it.
            if strictly_separates(data, &beta) {
                return Err(FitError::SeparationSuspected { beta_norm });
            }
            return Ok((
                FitResult {
                    alpha,
                    beta,
                    iterations: iteration,
                    grad_norm,
                    converged: true,
                    majority_count: data.majority_count(),
                    minority_count: data.minority_count(),
                },
                trace,
            ));
        }

        if beta_norm > SEPARATION_NORM {
            return Err(FitError::SeparationSuspected { beta_norm });
        }

        // Newton direction from the negated Hessian, which is SPD while the
        // problem stays strictly concave.
        let h = hessian(data, alpha, &beta);
        let neg_h = SpdMatrix::from_symmetric_parts(
            d + 1,
            h.iter().flatten().map(|v| -v).collect(),
        );
        let step = match neg_h.solve(&g) {
            Ok(step) => step,
            Err(NumericsError::NotPositiveDefinite { .. }) => {
                return Err(FitError::SeparationSuspected { beta_norm });
            }
            Err(e) => {
                return Err(FitError::InvalidData(format!(
                    "Newton solve failed unexpectedly: {e}"
                )));
            }
        };

        // Halve the step until the loss stops decreasing. The slack keeps
        // full Newton steps acceptable once the predicted improvement falls
        // under the loss's own floating-point noise near the optimum.
        let slack = 1e-12 * (1.0 + loss.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand_alpha = alpha + scale * step[0];
            let cand_beta: Vec<f64> = beta
                .iter()
                .enumerate()
                .map(|(k, b)| b + scale * step[k + 1])
                .collect();
            let cand_loss = log_loss(data, cand_alpha, &cand_beta);
            if cand_loss >= loss - slack && cand_loss.is_finite() {
                alpha = cand_alpha;
                beta = cand_beta;
                loss = cand_loss;
                trace.push(loss);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(FitError::MaxIterations {
                iterations: iteration,
                grad_norm,
            });
        }
    }

    let g = gradient(data, alpha, &beta);
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(FitError::MaxIterations {
        iterations: options.max_iter,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{surrounds_check, MajorityModel};
    use crate::numerics::Rng;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn data_1d(majority: &[f64], minority: &[f64]) -> LogisticData {
        let minority = MinoritySample::new(minority.iter().map(|&v| vec![v]).collect()).unwrap();
        LogisticData::new(majority.iter().map(|&v| vec![v]).collect(), minority).unwrap()
    }

    fn random_data_1d(rng: &mut Rng, n_major: usize, n_minor: usize) -> LogisticData {
        let majority: Vec<f64> = (0..n_major).map(|_| rng.standard_normal()).collect();
        let minority: Vec<f64> = (0..n_minor)
            .map(|_| 0.5 + 0.5 * rng.standard_normal())
            .collect();
        data_1d(&majority, &minority)
    }

    /// Plain-summation loss without the softplus shortcut, as an oracle.
    fn naive_loss(data: &LogisticData, alpha: f64, beta: &[f64]) -> f64 {
        let xbar = data.minority().mean().to_vec();
        let logit = |x: &[f64]| {
            let mut z = alpha;
            for k in 0..beta.len() {
                z += beta[k] * (x[k] - xbar[k]);
            }
            z
        };
        let mut loss = data.minority_count() as f64 * alpha;
        for x in data.minority().points() {
            loss -= (1.0 + logit(x).exp()).ln();
        }
        for x in data.majority() {
            loss -= (1.0 + logit(x).exp()).ln();
        }
        loss
    }

    #[test]
    fn loss_at_symmetric_zero_logits() {
        // One minority and one majority point both at xbar, alpha = 0:
        // all logits are zero, so the loss is -2 log 2.
        let data = data_1d(&[0.0], &[0.0]);
        for beta in [-2.0, 0.0, 1.5] {
            assert_relative_eq!(
                log_loss(&data, 0.0, &[beta]),
                -2.0 * std::f64::consts::LN_2,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn loss_softplus_terms_vanish_from_below_as_alpha_drops() {
        // With alpha = -745 every logit is hugely negative, so the softplus
        // sum approaches 0 from below and the loss is n*alpha minus a
        // vanishing remainder.
        let data = data_1d(&[-1.0, 1.0, 2.0], &[0.5]);
        let alpha = -745.0;
        let remainder = log_loss(&data, alpha, &[0.3]) - alpha;
        assert!(remainder <= 0.0, "remainder {remainder} should be <= 0");
        assert!(remainder > -1e-300, "remainder {remainder} should be tiny");
    }

    #[test]
    fn loss_matches_naive_summation() {
        let mut rng = Rng::new(17, 0);
        for _ in 0..10 {
            let data = random_data_1d(&mut rng, 20, 3);
            let alpha = -1.0 + rng.standard_normal() * 0.5;
            let beta = [rng.standard_normal() * 0.5];
            assert_abs_diff_eq!(
                log_loss(&data, alpha, &beta),
                naive_loss(&data, alpha, &beta),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(23, 0);
        let step = 1e-5;
        for _ in 0..5 {
            let data = random_data_1d(&mut rng, 25, 2);
            let alpha = -0.8;
            let beta = [0.4];
            let g = gradient(&data, alpha, &beta);
            let fd_alpha = (log_loss(&data, alpha + step, &beta)
                - log_loss(&data, alpha - step, &beta))
                / (2.0 * step);
            let fd_beta = (log_loss(&data, alpha, &[beta[0] + step])
                - log_loss(&data, alpha, &[beta[0] - step]))
                / (2.0 * step);
            assert_relative_eq!(g[0], fd_alpha, max_relative = 1e-6);
            assert_relative_eq!(g[1], fd_beta, max_relative = 1e-6);
        }
    }

    #[test]
    fn hessian_matches_finite_differences_and_is_symmetric() {
        let mut rng = Rng::new(29, 0);
        let step = 1e-5;
        let data = random_data_1d(&mut rng, 30, 2);
        let alpha = -1.2;
        let beta = [0.25];
        let h = hessian(&data, alpha, &beta);
        assert_abs_diff_eq!(h[0][1], h[1][0], epsilon = 1e-12);

        let g_hi = gradient(&data, alpha + step, &beta);
        let g_lo = gradient(&data, alpha - step, &beta);
        assert_relative_eq!(h[0][0], (g_hi[0] - g_lo[0]) / (2.0 * step), max_relative = 1e-6);
        assert_relative_eq!(h[1][0], (g_hi[1] - g_lo[1]) / (2.0 * step), max_relative = 1e-6);
        let g_hi = gradient(&data, alpha, &[beta[0] + step]);
        let g_lo = gradient(&data, alpha, &[beta[0] - step]);
        assert_relative_eq!(h[1][1], (g_hi[1] - g_lo[1]) / (2.0 * step), max_relative = 1e-6);
    }

    #[test]
    fn hessian_is_negative_semidefinite_along_iterates() {
        let mut rng = Rng::new(31, 0);
        let data = random_data_1d(&mut rng, 40, 3);
        for &(alpha, beta) in &[(-3.0, 0.0), (-1.0, 0.5), (0.0, -0.7), (1.0, 1.2)] {
            let h = hessian(&data, alpha, &[beta]);
            let neg = SpdMatrix::from_symmetric_parts(
                2,
                h.iter().flatten().map(|v| -v).collect(),
            );
            assert!(neg.cholesky().is_ok(), "Hessian not NSD at ({alpha}, {beta})");
        }
    }

    #[test]
    fn symmetric_instance_fits_zero_slope() {
        let data = data_1d(&[-1.0, 1.0], &[0.0]);
        let result = fit(&data, FitOptions::default()).unwrap();
        assert!(result.converged);
        assert!(result.grad_norm < 1e-10);
        assert_abs_diff_eq!(result.beta[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_fitted_optimum() {
        let mut rng = Rng::new(37, 0);
        let data = random_data_1d(&mut rng, 50, 3);
        let result = fit(&data, FitOptions::default()).unwrap();
        let g = gradient(&data, result.alpha, &result.beta);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "gradient norm at optimum: {norm}");
    }

    #[test]
    fn fit_matches_dense_grid_search() {
        let mut rng = Rng::new(41, 0);
        for _ in 0..3 {
            let data = random_data_1d(&mut rng, 25, 2);
            let result = fit(&data, FitOptions::default()).unwrap();

            // Coarse-to-fine 2D grid search over (alpha, beta).
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for ia in 0..=120 {
                for ib in 0..=120 {
                    let a = -6.0 + ia as f64 * 0.05;
                    let b = -3.0 + ib as f64 * 0.05;
                    let l = log_loss(&data, a, &[b]);
                    if l > best.0 {
                        best = (l, a, b);
                    }
                }
            }
            let (_, ca, cb) = best;
            let fine = 0.002;
            let mut best_fine = best;
            for ia in -30..=30 {
                for ib in -30..=30 {
                    let a = ca + ia as f64 * fine;
                    let b = cb + ib as f64 * fine;
                    let l = log_loss(&data, a, &[b]);
                    if l > best_fine.0 {
                        best_fine = (l, a, b);
                    }
                }
            }

            assert!(
                log_loss(&data, result.alpha, &result.beta) >= best_fine.0 - 1e-9,
                "grid found a better point than Newton"
            );
            assert!((result.beta[0] - best_fine.2).abs() <= 1.5 * fine);
            assert!((result.alpha - best_fine.1).abs() <= 1.5 * fine);
        }
    }

    #[test]
    fn separated_classes_are_detected() {
        let data = data_1d(&[-10.0, -11.0], &[10.0]);
        match fit(&data, FitOptions::default()) {
            Err(FitError::SeparationSuspected { .. }) => {}
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn ascent_is_monotone_between_accepted_iterates() {
        let mut rng = Rng::new(43, 0);
        for _ in 0..5 {
            let data = random_data_1d(&mut rng, 35, 2);
            let (_, trace) = fit_with_trace(&data, FitOptions::default()).unwrap();
            for w in trace.windows(2) {
                // Monotone up to the line search's floating-point slack.
                let slack = 1e-12 * (1.0 + w[0].abs());
                assert!(w[1] >= w[0] - slack, "loss decreased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn translation_leaves_slope_unchanged() {
        let mut rng = Rng::new(47, 0);
        let majority: Vec<f64> = (0..40).map(|_| rng.standard_normal()).collect();
        let minority = vec![0.4, 0.9];
        let base = fit(&data_1d(&majority, &minority), FitOptions::default()).unwrap();
        for shift in [-5.0, 3.25] {
            let shifted_major: Vec<f64> = majority.iter().map(|v| v + shift).collect();
            let shifted_minor: Vec<f64> = minority.iter().map(|v| v + shift).collect();
            let shifted = fit(
                &data_1d(&shifted_major, &shifted_minor),
                FitOptions::default(),
            )
            .unwrap();
            assert_abs_diff_eq!(base.beta[0], shifted.beta[0], epsilon = 1e-8);
        }
    }

    #[test]
    fn scaled_intercept_obeys_surrounds_bound() {
        // N e^{alpha_N} stays below 2n/delta with delta estimated from the
        // surrounds diagnostic at epsilon = 0.1.
        let model = MajorityModel::gaussian_1d(0.0, 1.0).unwrap();
        let xbar = 0.5;
        let delta = surrounds_check(&model, &[xbar], 0.1, 2).worst_mass;
        assert!(delta > 0.0);
        let bound = 2.0 / delta; // n = 1
        let mut previous = f64::INFINITY;
        for (idx, n_major) in [100usize, 200, 500, 1000, 5000].into_iter().enumerate() {
            let mut rng = Rng::new(1000 + idx as u64, 0);
            let majority: Vec<Vec<f64>> = model.sample(n_major, &mut rng);
            let minority = MinoritySample::single(vec![xbar]).unwrap();
            let data = LogisticData::new(majority, minority).unwrap();
            let result = fit(&data, FitOptions::default()).unwrap();
            let scaled = result.scaled_intercept();
            assert!(
                scaled < bound,
                "N e^alpha = {scaled} exceeds 2n/delta = {bound} at N = {n_major}"
            );
            assert!(scaled.is_finite() && scaled > 0.0);
            previous = previous.min(scaled);
        }
    }
}
