//! The infinitely imbalanced limit: the tilt `beta_star` matching the
//! majority model's tilted mean to the minority mean, the sandwich
//! covariance of `sqrt(N)(beta_N - beta_star)`, confidence intervals, and
//! majority sample-size planning.
//!
//! `beta_star` solves `E[e^{b.X} X] / E[e^{b.X}] = xbar`, the stationarity
//! condition of the strictly convex objective `log E[e^{b.X}] - b.xbar`.
//! The limit covariance is `Sigma = H^-1 V H^-T` with
//! `H = E[e^{b.X}(X - xbar)(X - xbar)^T]` and
//! `V = E[e^{2 b.X}(X - xbar)(X - xbar)^T]`.

use thiserror::Error;

use crate::distributions::{MajorityModel, ModelError, TiltPower};
use crate::numerics::{normal_quantile, CholeskyFactor, NumericsError, SpdMatrix};

/// Divergence threshold for the Newton solve.
const DIVERGENCE_NORM: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    /// Newton on the tilt equation diverged; the minority mean likely lies
    /// outside the range reachable by tilting the majority model.
    #[error(
        "no interior solution to the tilt equation (|beta| reached {beta_norm:.3e}, residual \
         {residual:.3e}); xbar may be outside the tiltable range of the model"
    )]
    NoInteriorSolution { beta_norm: f64, residual: f64 },
    /// `H` is numerically singular, violating the determinant assumption
    /// behind the limit law.
    #[error("tilted second-moment matrix H is not positive definite")]
    DegenerateHessian,
    #[error(transparent)]
    Moment(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Options for [`solve_beta_star`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Norm of the tilt-equation residual `tilted_mean(beta) - xbar`.
pub fn tilt_residual(
    model: &MajorityModel,
    xbar: &[f64],
    beta: &[f64],
) -> Result<f64, LimitError> {
    let moments = model.tilted_moments(beta, TiltPower::One)?;
    let mean = moments.mean();
    Ok(norm(&sub(&mean, xbar)))
}

/// Solves the tilt equation `tilted_mean(beta) = xbar` by damped Newton.
///
/// The Jacobian of the tilted mean is the tilted covariance, which is
/// positive definite, and the underlying objective
/// `log m0(beta) - beta.xbar` is strictly convex, so damped steps converge
/// globally whenever an interior solution exists.
pub fn solve_beta_star(
    model: &MajorityModel,
    xbar: &[f64],
    options: SolveOptions,
) -> Result<Vec<f64>, LimitError> {
    let d = model.dim();
    assert_eq!(xbar.len(), d, "xbar dimension mismatch");

    // Tilting an empirical model can only move the mean strictly inside the
    // hull of its atoms. In 1D that containment is checkable exactly; a
    // boundary xbar would otherwise pass the residual tolerance at a large
    // finite tilt. Higher dimensions rely on the divergence guard below.
    if let MajorityModel::Empirical(e) = model {
        if d == 1 {
            let lo = e.points().iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = e
                .points()
                .iter()
                .map(|p| p[0])
                .fold(f64::NEG_INFINITY, f64::max);
            if !(xbar[0] > lo && xbar[0] < hi) {
                return Err(LimitError::NoInteriorSolution {
                    beta_norm: f64::INFINITY,
                    residual: (lo - xbar[0]).max(xbar[0] - hi).max(0.0),
                });
            }
        }
    }

    let objective = |beta: &[f64]| -> Result<f64, ModelError> {
        let m = model.tilted_moments(beta, TiltPower::One)?;
        Ok(m.m0.ln() - dot(beta, xbar))
    };

    let mut beta = vec![0.0; d];
    let mut phi = objective(&beta)?;

    for _ in 0..options.max_iter {
        let moments = model.tilted_moments(&beta, TiltPower::One)?;
        let residual = sub(&moments.mean(), xbar);
        let res_norm = norm(&residual);
        if res_norm < options.tol {
            return Ok(beta);
        }
        let beta_norm = norm(&beta);
        if beta_norm > DIVERGENCE_NORM {
            return Err(LimitError::NoInteriorSolution {
                beta_norm,
                residual: res_norm,
            });
        }

        let jacobian = moments.covariance();
        let step = match jacobian.solve(&residual) {
            Ok(s) => s,
            // A collapsed tilted covariance means the tilt has pushed all
            // mass onto a face; no interior solution.
            Err(NumericsError::NotPositiveDefinite { .. }) => {
                return Err(LimitError::NoInteriorSolution {
                    beta_norm,
                    residual: res_norm,
                });
            }
            Err(e) => return Err(LimitError::Numerics(e)),
        };

        // Descend on the convex objective, halving on failure. Candidate
        // evaluations that overflow are treated as +infinity.
        let slack = 1e-12 * (1.0 + phi.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=40 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b - scale * s)
                .collect();
            match objective(&cand) {
                Ok(cand_phi) if cand_phi.is_finite() && cand_phi <= phi + slack => {
                    beta = cand;
                    phi = cand_phi;
                    accepted = true;
                    break;
                }
                Ok(_) | Err(ModelError::MomentOverflow) => scale *= 0.5,
                Err(e) => return Err(LimitError::Moment(e)),
            }
        }
        if !accepted {
            return Err(LimitError::NoInteriorSolution {
                beta_norm,
                residual: res_norm,
            });
        }
    }

    let residual = tilt_residual(model, xbar, &beta)?;
    Err(LimitError::NoInteriorSolution {
        beta_norm: norm(&beta),
        residual,
    })
}

/// Closed-form limit slope for Gaussian models: `cov^-1 (xbar - mu)`.
///
/// The 1D case is the textbook `(xbar - mu)/sigma^2`; for d >= 2 this
/// generalization is cross-checked against [`solve_beta_star`] in tests.
pub fn gaussian_beta_star(
    mean: &[f64],
    cov: &SpdMatrix,
    xbar: &[f64],
) -> Result<Vec<f64>, LimitError> {
    assert_eq!(mean.len(), cov.dim());
    assert_eq!(xbar.len(), cov.dim());
    Ok(cov.solve(&sub(xbar, mean))?)
}

/// The assembled limit distribution: slope, sandwich pieces, covariance,
/// and its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitInference {
    pub beta_star: Vec<f64>,
    pub h: SpdMatrix,
    pub v: SpdMatrix,
    pub sigma: SpdMatrix,
    pub chol_a: CholeskyFactor,
    pub xbar: Vec<f64>,
}

impl LimitInference {
    pub fn dim(&self) -> usize {
        self.beta_star.len()
    }

    /// The scalar variance in one dimension.
    pub fn sigma_scalar(&self) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        self.sigma.get(0, 0)
    }

    /// Per-coordinate standard deviations `sqrt(Sigma_kk)` via the Cholesky
    /// row norms.
    pub fn coordinate_sigmas(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.chol_a.row_norm(k)).collect()
    }
}

/// Builds `H`, `V`, and `Sigma = H^-1 V H^-T` at the provided limit slope.
pub fn compute_covariance(
    model: &MajorityModel,
    xbar: &[f64],
    beta_star: &[f64],
) -> Result<LimitInference, LimitError> {
    let d = model.dim();
    assert_eq!(xbar.len(), d);
    assert_eq!(beta_star.len(), d);

    let h = model
        .tilted_moments(beta_star, TiltPower::One)?
        .recentered_second_moment(xbar);
    let v = model
        .tilted_moments(beta_star, TiltPower::Two)?
        .recentered_second_moment(xbar);

    // H must be invertible (the determinant assumption); surface a
    // dedicated error when it is not.
    if h.cholesky().is_err() {
        return Err(LimitError::DegenerateHessian);
    }

    // Sigma = H^-1 V H^-1 via two SPD solves, no explicit inverse.
    let w = h.solve_matrix(&v)?; // rows of H^-1 V
    let w_t: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| w[j][i]).collect())
        .collect();
    let w_t_mat = SpdMatrix::from_symmetric_parts(d, w_t.into_iter().flatten().collect());
    let y = h.solve_matrix(&w_t_mat)?; // rows of H^-1 (H^-1 V)^T = Sigma^T
    let sigma = SpdMatrix::from_symmetric_parts(d, y.into_iter().flatten().collect());

    let chol_a = sigma.cholesky().map_err(|_| LimitError::DegenerateHessian)?;
    Ok(LimitInference {
        beta_star: beta_star.to_vec(),
        h,
        v,
        sigma,
        chol_a,
        xbar: xbar.to_vec(),
    })
}

/// Closed form for the 1D Gaussian limit variance:
/// `exp(z^2) ((xbar-mu)^2 + sigma^2) / sigma^4` with `z = (xbar-mu)/sigma`.
pub fn sigma_1d_gaussian(xbar: f64, mu: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let diff = xbar - mu;
    let s2 = sigma * sigma;
    (diff * diff / s2).exp() * (diff * diff + s2) / (s2 * s2)
}

/// A coordinatewise confidence interval around `beta_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    /// Confidence level `1 - theta`.
    pub level: f64,
    /// Majority sample size the interval is scaled for.
    pub majority_count: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConfidenceInterval {
    pub fn half_widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .collect()
    }

    pub fn contains(&self, beta: &[f64]) -> bool {
        beta.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(b, (l, u))| l <= b && b <= u)
    }
}

/// Coordinatewise interval `beta_star_k +/- sqrt(Sigma_kk) z_{theta/2} /
/// sqrt(N)`, the Cholesky row norms providing `sqrt(Sigma_kk)`.
pub fn confidence_interval(
    inference: &LimitInference,
    majority_count: usize,
    theta: f64,
) -> ConfidenceInterval {
    assert!(majority_count >= 1, "majority count must be at least 1");
    assert!(
        theta > 0.0 && theta < 1.0,
        "theta must lie strictly inside (0, 1)"
    );
    let z = normal_quantile(1.0 - theta / 2.0).expect("1 - theta/2 is inside (0.5, 1)");
    let scale = z / (majority_count as f64).sqrt();
    let sigmas = inference.coordinate_sigmas();
    let lower: Vec<f64> = inference
        .beta_star
        .iter()
        .zip(&sigmas)
        .map(|(b, s)| b - scale * s)
        .collect();
    let upper: Vec<f64> = inference
        .beta_star
        .iter()
        .zip(&sigmas)
        .map(|(b, s)| b + scale * s)
        .collect();
    ConfidenceInterval {
        level: 1.0 - theta,
        majority_count,
        lower,
        upper,
    }
}

/// Majority sample size needed for `|beta_N - beta_star| < epsilon` in the
/// 1D Gaussian case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSizePlan {
    Samples(u64),
    /// The requirement exceeds `2^63 - 1`; reported as a flag, not a crash.
    Overflow,
}

impl SampleSizePlan {
    pub fn samples(self) -> Option<u64> {
        match self {
            SampleSizePlan::Samples(n) => Some(n),
            SampleSizePlan::Overflow => None,
        }
    }
}

/// `ceil(exp(2 (xbar - mu)^2 / sigma^2) / epsilon^2)`.
pub fn plan_sample_size(xbar: f64, mu: f64, sigma: f64, epsilon: f64) -> SampleSizePlan {
    assert!(sigma > 0.0, "sigma must be positive");
    assert!(epsilon > 0.0, "epsilon must be positive");
    let z2 = ((xbar - mu) / sigma).powi(2);
    let required = ((2.0 * z2).exp() / (epsilon * epsilon)).ceil();
    if !required.is_finite() || required > i64::MAX as f64 {
        SampleSizePlan::Overflow
    } else {
        SampleSizePlan::Samples(required as u64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
