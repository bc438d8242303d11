//! Majority-class distribution models and exponentially tilted moment
//! queries.
//!
//! A model answers three questions: tilted moments (the integrals of
//! `exp(k b.x) {1, x, x x^T}` against the distribution), i.i.d. samples, and
//! whether the distribution places mass beyond a point in every direction
//! (the "surrounds" condition that keeps the logistic maximizer finite).
//!
//! Gaussian models answer moment queries in closed form: tilting `N(mu, S)`
//! by `exp(t.x)` rescales total mass by `exp(t.mu + t.S t / 2)` and shifts
//! the distribution to `N(mu + S t, S)`. Empirical models use exact sums,
//! generic 1D densities adaptive quadrature.

use std::sync::Arc;

use thiserror::Error;

use crate::numerics::{
    adaptive_simpson, gauss_hermite, mvn_sample_with_factor, normal_cdf, truncate_support,
    CholeskyFactor, NumericsError, Rng, SpdMatrix,
};

/// Any single term whose magnitude passes this bound flags the tilt as too
/// aggressive for the model's tails.
const OVERFLOW_LIMIT: f64 = 1e300;

/// Absolute tolerance for density-model quadrature.
const DENSITY_QUAD_TOL: f64 = 1e-10;

/// Tolerance on the normalization of a user-supplied density.
const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A tilted integral left floating-point range; the tilt magnitude is
    /// too large for the model's tails.
    #[error("tilted moment exceeds floating-point range; |beta| too large for the model's tails")]
    MomentOverflow,
    /// Construction input violated a model invariant.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// The supplied density does not integrate to one over its support.
    #[error("density integrates to {integral} over its support, expected 1 within 1e-8")]
    NotNormalized { integral: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Exponent multiplier for tilted moments: `H` uses `k = 1`, `V` uses `k = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltPower {
    One,
    Two,
}

impl TiltPower {
    pub fn multiplier(self) -> u8 {
        match self {
            TiltPower::One => 1,
            TiltPower::Two => 2,
        }
    }

    fn factor(self) -> f64 {
        f64::from(self.multiplier())
    }
}

/// The raw tilted moments `m0 = E[e^{k b.X}]`, `m1 = E[e^{k b.X} X]`,
/// `m2 = E[e^{k b.X} X X^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMoments {
    pub m0: f64,
    pub m1: Vec<f64>,
    pub m2: SpdMatrix,
    pub tilt: Vec<f64>,
    pub multiplier: u8,
}

impl TiltedMoments {
    /// Mean of the tilted distribution, `m1 / m0`.
    pub fn mean(&self) -> Vec<f64> {
        self.m1.iter().map(|v| v / self.m0).collect()
    }

    /// Covariance of the tilted distribution, `m2/m0 - mean mean^T`.
    pub fn covariance(&self) -> SpdMatrix {
        let d = self.m1.len();
        let mean = self.mean();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(self.m2.get(i, j) / self.m0 - mean[i] * mean[j]);
            }
        }
        SpdMatrix::from_symmetric_parts(d, entries)
    }

    /// Second moment recentered at a fixed point:
    /// `E[e^{k b.X} (X - c)(X - c)^T] = m2 - m1 c^T - c m1^T + m0 c c^T`.
    pub fn recentered_second_moment(&self, center: &[f64]) -> SpdMatrix {
        let d = self.m1.len();
        debug_assert_eq!(center.len(), d);
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(
                    self.m2.get(i, j) - self.m1[i] * center[j] - center[i] * self.m1[j]
                        + self.m0 * center[i] * center[j],
                );
            }
        }
        SpdMatrix::from_symmetric_parts(d, entries)
    }
}

/// Mean of a 1D Gaussian after tilting by `exp(t x)`: the distribution
/// shifts to `N(mu + t sigma^2, sigma^2)`.
pub fn gaussian_tilted_mean(mu: f64, sigma2: f64, t: f64) -> f64 {
    assert!(sigma2 > 0.0, "variance must be positive, got {sigma2}");
    mu + t * sigma2
}

#[derive(Clone)]
struct GaussianParams {
    mean: Vec<f64>,
    cov: SpdMatrix,
    chol: CholeskyFactor,
}

#[derive(Clone)]
struct EmpiricalParams {
    points: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Clone)]
struct DensityParams {
    pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: (f64, f64),
    // Support trimmed to where the density is numerically alive.
    trimmed: (f64, f64),
    // Precomputed inverse-CDF grid for sampling: (abscissa, cumulative mass).
    cdf_grid: Vec<(f64, f64)>,
}

/// The majority-class distribution.
#[derive(Clone)]
pub enum MajorityModel {
    Gaussian(GaussianModel),
    Empirical(EmpiricalModel),
    Density1d(DensityModel),
}

#[derive(Clone)]
pub struct GaussianModel(GaussianParams);

#[derive(Clone)]
pub struct EmpiricalModel(EmpiricalParams);

#[derive(Clone)]
pub struct DensityModel(DensityParams);

impl GaussianModel {
    pub fn mean(&self) -> &[f64] {
        &self.0.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.0.cov
    }
}

impl EmpiricalModel {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.0.points
    }
}

impl DensityModel {
    pub fn support(&self) -> (f64, f64) {
        self.0.support
    }
}

impl std::fmt::Debug for MajorityModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MajorityModel::Gaussian(g) => f
                .debug_struct("Gaussian")
                .field("mean", &g.0.mean)
                .field("cov", &g.0.cov)
                .finish(),
            MajorityModel::Empirical(e) => f
                .debug_struct("Empirical")
                .field("points", &e.0.points.len())
                .field("dim", &e.0.dim)
                .finish(),
            MajorityModel::Density1d(d) => f
                .debug_struct("Density1d")
                .field("support", &d.0.support)
                .finish(),
        }
    }
}

impl MajorityModel {
    /// Gaussian model `N(mean, cov)`; the covariance must be positive
    /// definite.
    pub fn gaussian(mean: Vec<f64>, cov: SpdMatrix) -> Result<Self, ModelError> {
        if mean.len() != cov.dim() {
            return Err(ModelError::InvalidModel(format!(
                "mean has dimension {} but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidModel("mean must be finite".into()));
        }
        let chol = cov.cholesky()?;
        Ok(MajorityModel::Gaussian(GaussianModel(GaussianParams {
            mean,
            cov,
            chol,
        })))
    }

    /// 1D Gaussian `N(mu, sigma^2)`.
    pub fn gaussian_1d(mu: f64, sigma: f64) -> Result<Self, ModelError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::InvalidModel(format!(
                "standard deviation must be positive and finite, got {sigma}"
            )));
        }
        Self::gaussian(vec![mu], SpdMatrix::scalar(sigma * sigma))
    }

    /// Empirical model over observed points; needs at least two distinct
    /// points so tilted second moments stay nondegenerate.
    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::InvalidModel(
                "empirical model needs at least 2 points".into(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(ModelError::InvalidModel(
                "points must have at least one coordinate".into(),
            ));
        }
        for p in &points {
            if p.len() != dim {
                return Err(ModelError::InvalidModel(
                    "all points must share one dimension".into(),
                ));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidModel("points must be finite".into()));
            }
        }
        let distinct = points.iter().any(|p| p != &points[0]);
        if !distinct {
            return Err(ModelError::InvalidModel(
                "empirical model needs at least 2 distinct points".into(),
            ));
        }
        Ok(MajorityModel::Empirical(EmpiricalModel(EmpiricalParams {
            points,
            dim,
        })))
    }

    /// Convenience constructor for 1D empirical models.
    pub fn empirical_1d(values: &[f64]) -> Result<Self, ModelError> {
        Self::empirical(values.iter().map(|&v| vec![v]).collect())
    }

    /// Generic 1D density on a finite support; must integrate to 1 over the
    /// support to within `1e-8`.
    pub fn density_1d(
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self, ModelError> {
        let (a, b) = support;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ModelError::InvalidModel(format!(
                "support must be a finite interval, got [{a}, {b}]"
            )));
        }
        let pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(pdf);
        let trimmed = truncate_support(&*pdf, support);
        let integral = adaptive_simpson(&*pdf, trimmed.0, trimmed.1, DENSITY_QUAD_TOL);
        if (integral - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ModelError::NotNormalized { integral });
        }
        let cdf_grid = build_cdf_grid(&*pdf, trimmed);
        Ok(MajorityModel::Density1d(DensityModel(DensityParams {
            pdf,
            support,
            trimmed,
            cdf_grid,
        })))
    }

    pub fn dim(&self) -> usize {
        match self {
            MajorityModel::Gaussian(g) => g.0.mean.len(),
            MajorityModel::Empirical(e) => e.0.dim,
            MajorityModel::Density1d(_) => 1,
        }
    }

    /// Untilted mean of the model.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            MajorityModel::Gaussian(g) => g.0.mean.clone(),
            MajorityModel::Empirical(e) => {
                let n = e.0.points.len() as f64;
                (0..e.0.dim)
                    .map(|j| e.0.points.iter().map(|p| p[j]).sum::<f64>() / n)
                    .collect()
            }
            MajorityModel::Density1d(d) => {
                let pdf = &d.0.pdf;
                vec![adaptive_simpson(
                    |x| x * pdf(x),
                    d.0.trimmed.0,
                    d.0.trimmed.1,
                    DENSITY_QUAD_TOL,
                )]
            }
        }
    }

    /// Tilted moments `E[e^{k beta.X} {1, X, X X^T}]`.
    ///
    /// Gaussian models are evaluated in closed form, empirical models by
    /// exact sums, and 1D densities by adaptive quadrature on a support
    /// trimmed against the tilted integrand.
    pub fn tilted_moments(
        &self,
        beta: &[f64],
        power: TiltPower,
    ) -> Result<TiltedMoments, ModelError> {
        if beta.len() != self.dim() {
            return Err(ModelError::InvalidModel(format!(
                "tilt has dimension {} but the model is {}-dimensional",
                beta.len(),
                self.dim()
            )));
        }
        match self {
            MajorityModel::Gaussian(g) => gaussian_tilted_moments(&g.0, beta, power),
            MajorityModel::Empirical(e) => empirical_tilted_moments(&e.0.points, beta, power),
            MajorityModel::Density1d(d) => density_tilted_moments(&d.0, beta[0], power),
        }
    }

    /// Quadrature evaluation of the same moments, kept as an independent
    /// cross-validation route for the Gaussian closed form. 1D models only.
    pub fn tilted_moments_by_quadrature(
        &self,
        beta: &[f64],
        power: TiltPower,
        order: usize,
    ) -> Result<TiltedMoments, ModelError> {
        match self {
            MajorityModel::Gaussian(g) => {
                if g.0.mean.len() != 1 {
                    return Err(ModelError::Numerics(NumericsError::UnsupportedDimension(
                        g.0.mean.len(),
                    )));
                }
                let mu = g.0.mean[0];
                let sigma = g.0.cov.get(0, 0).sqrt();
                let t = power.factor() * beta[0];
                let rule = gauss_hermite(order);
                // Substitute x = mu + sqrt(2) sigma u against exp(-u^2).
                let root = std::f64::consts::SQRT_2 * sigma;
                let norm = std::f64::consts::PI.sqrt();
                let moment = |f: &dyn Fn(f64) -> f64| {
                    rule.integrate(|u| {
                        let x = mu + root * u;
                        (t * x).exp() * f(x)
                    }) / norm
                };
                let m0 = moment(&|_| 1.0);
                let m1 = moment(&|x| x);
                let m2 = moment(&|x| x * x);
                if !(m0.is_finite() && m1.is_finite() && m2.is_finite()) || m0 > OVERFLOW_LIMIT {
                    return Err(ModelError::MomentOverflow);
                }
                Ok(TiltedMoments {
                    m0,
                    m1: vec![m1],
                    m2: SpdMatrix::scalar(m2),
                    tilt: beta.to_vec(),
                    multiplier: power.multiplier(),
                })
            }
            // Exact sums are already the definition of the empirical
            // integral, and the density path is quadrature.
            MajorityModel::Empirical(_) | MajorityModel::Density1d(_) => {
                self.tilted_moments(beta, power)
            }
        }
    }

    /// Draws `count` i.i.d. samples from the model.
    pub fn sample(&self, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        match self {
            MajorityModel::Gaussian(g) => (0..count)
                .map(|_| mvn_sample_with_factor(&g.0.mean, &g.0.chol, rng))
                .collect(),
            MajorityModel::Empirical(e) => (0..count)
                .map(|_| e.0.points[rng.index(e.0.points.len())].clone())
                .collect(),
            MajorityModel::Density1d(d) => (0..count)
                .map(|_| vec![sample_from_cdf_grid(&d.0.cdf_grid, rng.uniform())])
                .collect(),
        }
    }

    /// Mass assigned beyond `threshold` along the projection `direction`:
    /// `P[X.direction > threshold]`.
    fn halfspace_mass(&self, direction: &[f64], threshold: f64) -> f64 {
        match self {
            MajorityModel::Gaussian(g) => {
                let proj_mean = dot(&g.0.mean, direction);
                let var = quadratic_form(&g.0.cov, direction);
                if var <= 0.0 {
                    return if proj_mean > threshold { 1.0 } else { 0.0 };
                }
                1.0 - normal_cdf((threshold - proj_mean) / var.sqrt())
            }
            MajorityModel::Empirical(e) => {
                let hits = e
                    .0
                    .points
                    .iter()
                    .filter(|p| dot(p, direction) > threshold)
                    .count();
                hits as f64 / e.0.points.len() as f64
            }
            MajorityModel::Density1d(d) => {
                let (lo, hi) = d.0.trimmed;
                let pdf = &d.0.pdf;
                if direction[0] > 0.0 {
                    let from = threshold / direction[0];
                    if from >= hi {
                        0.0
                    } else {
                        adaptive_simpson(&**pdf, from.max(lo), hi, DENSITY_QUAD_TOL)
                    }
                } else {
                    let to = threshold / direction[0];
                    if to <= lo {
                        0.0
                    } else {
                        adaptive_simpson(&**pdf, lo, to.min(hi), DENSITY_QUAD_TOL)
                    }
                }
            }
        }
    }
}

/// Outcome of the surrounds diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct SurroundsReport {
    /// Whether every probed direction kept positive mass beyond `epsilon`.
    pub satisfied: bool,
    /// The smallest halfspace mass found.
    pub worst_mass: f64,
    /// The direction attaining it.
    pub worst_direction: Vec<f64>,
}

/// Estimates the infimum over unit directions `w` of the model's mass on
/// `{x : (x - xbar).w > epsilon}`.
///
/// In 1D the two signs are checked exactly. In higher dimensions the
/// infimum is probed on `directions` quasi-uniform unit vectors plus the
/// signed coordinate axes, so the result is a sound falsifier and a
/// heuristic verifier.
pub fn surrounds_check(
    model: &MajorityModel,
    xbar: &[f64],
    epsilon: f64,
    directions: usize,
) -> SurroundsReport {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!(directions >= 1, "need at least one direction");
    let d = model.dim();
    assert_eq!(xbar.len(), d, "xbar dimension mismatch");

    let probe_set = direction_set(d, directions);
    let mut worst_mass = f64::INFINITY;
    let mut worst_direction = vec![0.0; d];
    for omega in probe_set {
        // (x - xbar).w > eps  <=>  x.w > xbar.w + eps
        let mass = model.halfspace_mass(&omega, dot(xbar, &omega) + epsilon);
        if mass < worst_mass {
            worst_mass = mass;
            worst_direction = omega;
        }
    }
    SurroundsReport {
        satisfied: worst_mass > 0.0,
        worst_mass,
        worst_direction,
    }
}

/// Unit directions probed by [`surrounds_check`]: both signs in 1D, evenly
/// spaced angles in 2D, deterministic sphere points in higher dimensions,
/// always including the signed coordinate axes.
fn direction_set(dim: usize, directions: usize) -> Vec<Vec<f64>> {
    let mut set = Vec::new();
    match dim {
        1 => {
            set.push(vec![1.0]);
            set.push(vec![-1.0]);
        }
        2 => {
            let n = directions.max(4);
            for k in 0..n {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                set.push(vec![angle.cos(), angle.sin()]);
            }
            push_axes(&mut set, dim);
        }
        _ => {
            let mut rng = Rng::new(0x5eed_d1ec, 0);
            while set.len() < directions {
                let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
                let n = dot(&v, &v).sqrt();
                if n > 1e-12 {
                    set.push(v.into_iter().map(|x| x / n).collect());
                }
            }
            push_axes(&mut set, dim);
        }
    }
    set
}

fn push_axes(set: &mut Vec<Vec<f64>>, dim: usize) {
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut axis = vec![0.0; dim];
            axis[i] = sign;
            set.push(axis);
        }
    }
}

/// The minority class: its points, mean, and boundedness metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MinoritySample {
    points: Vec<Vec<f64>>,
    mean: Vec<f64>,
    bound: f64,
}

impl MinoritySample {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::InvalidModel(
                "minority sample needs at least one point".into(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(ModelError::InvalidModel(
                "minority points need at least one coordinate".into(),
            ));
        }
        let mut bound = 0.0_f64;
        for p in &points {
            if p.len() != dim {
                return Err(ModelError::InvalidModel(
                    "all minority points must share one dimension".into(),
                ));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidModel(
                    "minority points must be finite".into(),
                ));
            }
            bound = bound.max(dot(p, p).sqrt());
        }
        let n = points.len() as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n)
            .collect();
        Ok(Self {
            points,
            mean,
            bound,
        })
    }

    /// Single-point convenience constructor (the `n = 1` protocol).
    pub fn single(point: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(vec![point])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn gaussian_tilted_moments(
    params: &GaussianParams,
    beta: &[f64],
    power: TiltPower,
) -> Result<TiltedMoments, ModelError> {
    let d = params.mean.len();
    let t: Vec<f64> = beta.iter().map(|b| b * power.factor()).collect();
    let cov_t = params.cov.mul_vec(&t);
    let exponent = dot(&t, &params.mean) + 0.5 * dot(&t, &cov_t);
    if exponent > OVERFLOW_LIMIT.ln() {
        return Err(ModelError::MomentOverflow);
    }
    let m0 = exponent.exp();
    let tilted_mean: Vec<f64> = params
        .mean
        .iter()
        .zip(&cov_t)
        .map(|(m, s)| m + s)
        .collect();
    let m1: Vec<f64> = tilted_mean.iter().map(|m| m0 * m).collect();
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            entries.push(m0 * (params.cov.get(i, j) + tilted_mean[i] * tilted_mean[j]));
        }
    }
    if m1.iter().any(|v| !v.is_finite()) || entries.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::MomentOverflow);
    }
    Ok(TiltedMoments {
        m0,
        m1,
        m2: SpdMatrix::from_symmetric_parts(d, entries),
        tilt: beta.to_vec(),
        multiplier: power.multiplier(),
    })
}

fn empirical_tilted_moments(
    points: &[Vec<f64>],
    beta: &[f64],
    power: TiltPower,
) -> Result<TiltedMoments, ModelError> {
    let d = beta.len();
    let n = points.len() as f64;
    let k = power.factor();
    let mut m0 = 0.0;
    let mut m1 = vec![0.0; d];
    let mut m2 = vec![0.0; d * d];
    for p in points {
        let w = (k * dot(beta, p)).exp();
        if !w.is_finite() || w > OVERFLOW_LIMIT {
            return Err(ModelError::MomentOverflow);
        }
        m0 += w;
        for i in 0..d {
            m1[i] += w * p[i];
            for j in 0..d {
                m2[i * d + j] += w * p[i] * p[j];
            }
        }
    }
    m0 /= n;
    for v in m1.iter_mut() {
        *v /= n;
    }
    for v in m2.iter_mut() {
        *v /= n;
    }
    if m1.iter().any(|v| !v.is_finite()) || m2.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::MomentOverflow);
    }
    Ok(TiltedMoments {
        m0,
        m1,
        m2: SpdMatrix::from_symmetric_parts(d, m2),
        tilt: beta.to_vec(),
        multiplier: power.multiplier(),
    })
}

fn density_tilted_moments(
    params: &DensityParams,
    beta: f64,
    power: TiltPower,
) -> Result<TiltedMoments, ModelError> {
    let t = power.factor() * beta;
    let pdf = params.pdf.clone();
    let weight = move |x: f64| (t * x).exp() * pdf(x);
    // Trim against the tilted integrand so tilts that push mass toward an
    // edge of the declared support still integrate accurately.
    let (lo, hi) = truncate_support(&weight, params.support);

    // Probe for overflow before integrating, and estimate the integrand
    // magnitude so the quadrature tolerance can scale with it (a fixed
    // absolute tolerance on a tilted integrand of size e.g. 1e20 would
    // force unbounded refinement).
    const PROBES: usize = 512;
    let h = (hi - lo) / PROBES as f64;
    let mut rough_mass = 0.0_f64;
    for i in 0..=PROBES {
        let x = lo + i as f64 * h;
        let w = weight(x) * (1.0 + x.abs() + x * x);
        if !w.is_finite() || w > OVERFLOW_LIMIT {
            return Err(ModelError::MomentOverflow);
        }
        rough_mass += weight(x) * h;
    }
    let tol = DENSITY_QUAD_TOL * rough_mass.max(1.0);
    let span = lo.abs().max(hi.abs());

    let m0 = adaptive_simpson(&weight, lo, hi, tol);
    let m1 = adaptive_simpson(|x| x * weight(x), lo, hi, tol * span.max(1.0));
    let m2 = adaptive_simpson(|x| x * x * weight(x), lo, hi, tol * (span * span).max(1.0));
    if !(m0.is_finite() && m1.is_finite() && m2.is_finite()) {
        return Err(ModelError::MomentOverflow);
    }
    Ok(TiltedMoments {
        m0,
        m1: vec![m1],
        m2: SpdMatrix::scalar(m2),
        tilt: vec![beta],
        multiplier: power.multiplier(),
    })
}

/// Cumulative-mass grid over the trimmed support, for inverse-CDF sampling.
fn build_cdf_grid(pdf: &(dyn Fn(f64) -> f64 + Sync), trimmed: (f64, f64)) -> Vec<(f64, f64)> {
    const SEGMENTS: usize = 2048;
    let (lo, hi) = trimmed;
    let h = (hi - lo) / SEGMENTS as f64;
    let mut grid = Vec::with_capacity(SEGMENTS + 1);
    grid.push((lo, 0.0));
    let mut cum = 0.0;
    for i in 0..SEGMENTS {
        let a = lo + i as f64 * h;
        let b = a + h;
        cum += (b - a) / 6.0 * (pdf(a) + 4.0 * pdf(0.5 * (a + b)) + pdf(b));
        grid.push((b, cum));
    }
    // Normalize so the last entry is exactly 1.
    let total = cum;
    for entry in grid.iter_mut() {
        entry.1 /= total;
    }
    grid
}

fn sample_from_cdf_grid(grid: &[(f64, f64)], u: f64) -> f64 {
    let idx = grid.partition_point(|&(_, c)| c < u);
    if idx == 0 {
        return grid[0].0;
    }
    if idx >= grid.len() {
        return grid[grid.len() - 1].0;
    }
    let (x0, c0) = grid[idx - 1];
    let (x1, c1) = grid[idx];
    if c1 <= c0 {
        return x1;
    }
    x0 + (u - c0) / (c1 - c0) * (x1 - x0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quadratic_form(m: &SpdMatrix, v: &[f64]) -> f64 {
    dot(v, &m.mul_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn standard_normal_model() -> MajorityModel {
        MajorityModel::gaussian_1d(0.0, 1.0).unwrap()
    }

    fn normal_density_model(mu: f64, sigma: f64, halfwidth: f64) -> MajorityModel {
        MajorityModel::density_1d(
            move |x: f64| {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            },
            (mu - halfwidth, mu + halfwidth),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_m0_matches_mgf() {
        // E[e^{tX}] = e^{t^2/2} for X ~ N(0,1).
        let model = standard_normal_model();
        for t in [-3.0, -1.0, -0.25, 0.5, 1.0, 2.5] {
            let m = model.tilted_moments(&[t], TiltPower::One).unwrap();
            assert_relative_eq!(m.m0, (t * t / 2.0).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_tilt_returns_untilted_mean_for_all_model_kinds() {
        let models = [
            standard_normal_model(),
            MajorityModel::gaussian_1d(2.0, 0.5).unwrap(),
            MajorityModel::empirical_1d(&[-1.0, 0.5, 2.0, 4.0]).unwrap(),
            normal_density_model(1.0, 1.0, 10.0),
        ];
        for model in &models {
            let m = model.tilted_moments(&[0.0], TiltPower::One).unwrap();
            assert_relative_eq!(m.m0, 1.0, max_relative = 1e-9);
            assert_relative_eq!(m.mean()[0], model.mean()[0], max_relative = 1e-8);
        }
    }

    #[test]
    fn empirical_three_point_tilt_matches_direct_sum() {
        let model = MajorityModel::empirical_1d(&[1.0, 2.0, 3.0]).unwrap();
        let m = model.tilted_moments(&[0.5], TiltPower::One).unwrap();
        let expected = (0.5f64.exp() + 1.0f64.exp() + 1.5f64.exp()) / 3.0;
        assert_relative_eq!(m.m0, expected, max_relative = 1e-14);
        assert_relative_eq!(m.m0, 2.949564056499079, max_relative = 1e-12);
        let expected_m1 =
            (1.0 * 0.5f64.exp() + 2.0 * 1.0f64.exp() + 3.0 * 1.5f64.exp()) / 3.0;
        assert_relative_eq!(m.m1[0], expected_m1, max_relative = 1e-14);
    }

    #[test]
    fn overflow_is_reported_not_propagated_as_infinity() {
        let model = MajorityModel::empirical_1d(&[0.0, 1000.0]).unwrap();
        assert_eq!(
            model.tilted_moments(&[1.0], TiltPower::One),
            Err(ModelError::MomentOverflow)
        );
        let gauss = standard_normal_model();
        assert_eq!(
            gauss.tilted_moments(&[1e6], TiltPower::Two),
            Err(ModelError::MomentOverflow)
        );
    }

    #[test]
    fn tilted_mean_shift_identities() {
        assert_eq!(gaussian_tilted_mean(0.0, 1.0, 0.0), 0.0);
        assert_eq!(gaussian_tilted_mean(0.0, 1.0, 1.0), 1.0);
        assert_eq!(gaussian_tilted_mean(2.0, 4.0, 0.5), 4.0);
    }

    #[test]
    fn gaussian_closed_form_matches_quadrature_shift_identity() {
        // For f in {1, x, x^2}: integral of e^{tx} f dF0 equals
        // e^{t^2 s^2/2 + mu t} * integral of f dF_t, F_t = N(mu + t s^2, s^2).
        for &(mu, sigma) in &[(0.0, 1.0), (1.5, 0.5), (-2.0, 2.0)] {
            let model = MajorityModel::gaussian_1d(mu, sigma).unwrap();
            for t in [-3.0, -1.2, -0.4, 0.0, 0.7, 1.9, 3.0] {
                let closed = model.tilted_moments(&[t], TiltPower::One).unwrap();
                let quad = model
                    .tilted_moments_by_quadrature(&[t], TiltPower::One, 64)
                    .unwrap();
                let s2 = sigma * sigma;
                let scale = (t * t * s2 / 2.0 + mu * t).exp();
                let shifted_mean = mu + t * s2;
                assert_relative_eq!(closed.m0, scale, max_relative = 1e-10);
                assert_relative_eq!(quad.m0, scale, max_relative = 1e-8);
                assert_relative_eq!(quad.m1[0], scale * shifted_mean, max_relative = 1e-8);
                assert_relative_eq!(
                    quad.m2.get(0, 0),
                    scale * (s2 + shifted_mean * shifted_mean),
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn density_quadrature_matches_gaussian_closed_form() {
        let gauss = MajorityModel::gaussian_1d(0.5, 1.2).unwrap();
        let dens = normal_density_model(0.5, 1.2, 16.0);
        for t in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            for power in [TiltPower::One, TiltPower::Two] {
                let a = gauss.tilted_moments(&[t], power).unwrap();
                let b = dens.tilted_moments(&[t], power).unwrap();
                assert_relative_eq!(a.m0, b.m0, max_relative = 1e-8);
                assert_relative_eq!(a.m1[0], b.m1[0], max_relative = 1e-8);
                assert_relative_eq!(a.m2.get(0, 0), b.m2.get(0, 0), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn variance_ratio_identity() {
        // With t = (xbar - mu)/s^2, the ratio of double-tilted to squared
        // single-tilted integrals is e^{(xbar-mu)^2/s^2} times the same
        // ratio under the shifted laws F_{2t}, F_t.
        for &(mu, sigma, xbar) in &[(0.0, 1.0, 1.0), (1.0, 2.0, 2.5), (-1.0, 0.5, -1.8)] {
            let s2 = sigma * sigma;
            let t = (xbar - mu) / s2;
            for f_id in 0..3 {
                let f = move |x: f64| match f_id {
                    0 => 1.0,
                    1 => x,
                    _ => x * x,
                };
                let rule = gauss_hermite(96);
                let root = std::f64::consts::SQRT_2 * sigma;
                let norm = std::f64::consts::PI.sqrt();
                // Quadrature route for the left side.
                let tilted = |scale: f64| {
                    rule.integrate(|u| {
                        let x = mu + root * u;
                        (scale * t * x).exp() * f(x)
                    }) / norm
                };
                let left = tilted(2.0) / tilted(1.0).powi(2);
                // Closed-form route for the right side: moments of f under
                // N(mu + 2 t s^2, s^2) and N(mu + t s^2, s^2).
                let moment_under = |shift: f64| {
                    let m = mu + shift * s2;
                    match f_id {
                        0 => 1.0,
                        1 => m,
                        _ => s2 + m * m,
                    }
                };
                let right = ((xbar - mu) * (xbar - mu) / s2).exp() * moment_under(2.0 * t)
                    / moment_under(t).powi(2);
                assert_relative_eq!(left, right, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let model = standard_normal_model();
        let mut a = Rng::new(7, 1);
        let mut b = Rng::new(7, 1);
        assert_eq!(model.sample(32, &mut a), model.sample(32, &mut b));
    }

    #[test]
    fn gaussian_sample_moments_converge() {
        let model = standard_normal_model();
        let mut rng = Rng::new(21, 0);
        let draws = model.sample(100_000, &mut rng);
        let n = draws.len() as f64;
        let mean = draws.iter().map(|p| p[0]).sum::<f64>() / n;
        let var = draws.iter().map(|p| (p[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn single_atom_empirical_is_rejected_but_two_atoms_sample() {
        assert!(MajorityModel::empirical_1d(&[5.0]).is_err());
        assert!(MajorityModel::empirical_1d(&[5.0, 5.0]).is_err());
        let model = MajorityModel::empirical_1d(&[5.0, 5.0, 6.0]).unwrap();
        let mut rng = Rng::new(3, 0);
        for p in model.sample(64, &mut rng) {
            assert!(p[0] == 5.0 || p[0] == 6.0);
        }
    }

    #[test]
    fn density_sampling_matches_moments() {
        let model = normal_density_model(2.0, 0.7, 8.0);
        let mut rng = Rng::new(4, 0);
        let draws = model.sample(100_000, &mut rng);
        let n = draws.len() as f64;
        let mean = draws.iter().map(|p| p[0]).sum::<f64>() / n;
        let var = draws.iter().map(|p| (p[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 2.0).abs() < 0.02, "sample mean {mean}");
        assert!((var - 0.49).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn density_must_be_normalized() {
        let err = MajorityModel::density_1d(|_| 0.3, (0.0, 2.0));
        assert!(matches!(err, Err(ModelError::NotNormalized { .. })));
    }

    #[test]
    fn surrounds_standard_normal_at_origin() {
        let model = standard_normal_model();
        let report = surrounds_check(&model, &[0.0], 0.1, 256);
        assert!(report.satisfied);
        // Both signs give 1 - Phi(0.1); oracle from the normal tail.
        assert_abs_diff_eq!(report.worst_mass, 1.0 - normal_cdf(0.1), epsilon = 1e-12);
        assert_abs_diff_eq!(report.worst_mass, 0.460172162722971, epsilon = 1e-12);
    }

    #[test]
    fn surrounds_one_dimension_probes_both_signs() {
        // Off-center xbar: the worse direction points away from the mass.
        let model = standard_normal_model();
        let report = surrounds_check(&model, &[1.0], 0.1, 256);
        assert_eq!(report.worst_direction, vec![1.0]);
        assert_abs_diff_eq!(report.worst_mass, 1.0 - normal_cdf(1.1), epsilon = 1e-12);
    }

    #[test]
    fn surrounds_empirical_two_atoms() {
        let model = MajorityModel::empirical_1d(&[-1.0, 1.0]).unwrap();
        let report = surrounds_check(&model, &[0.0], 0.5, 2);
        assert!(report.satisfied);
        assert_eq!(report.worst_mass, 0.5);
    }

    #[test]
    fn surrounds_detects_one_sided_support() {
        // All mass strictly left of xbar: not surrounded.
        let model = MajorityModel::empirical_1d(&[-3.0, -2.0, -1.0]).unwrap();
        let report = surrounds_check(&model, &[0.0], 0.1, 2);
        assert!(!report.satisfied);
        assert_eq!(report.worst_mass, 0.0);
        assert_eq!(report.worst_direction, vec![1.0]);
    }

    #[test]
    fn surrounds_two_dimensional_gaussian() {
        let cov = SpdMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let model = MajorityModel::gaussian(vec![0.0, 0.0], cov).unwrap();
        let report = surrounds_check(&model, &[0.0, 0.0], 0.1, 64);
        assert!(report.satisfied);
        // Isotropic model: every direction has the same tail mass.
        assert_abs_diff_eq!(report.worst_mass, 1.0 - normal_cdf(0.1), epsilon = 1e-10);
    }

    #[test]
    fn minority_sample_mean_and_bound() {
        let sample =
            MinoritySample::new(vec![vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(sample.mean()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sample.mean()[1], 1.0, epsilon = 1e-12);
        assert_eq!(sample.bound(), 3.0);
        assert_eq!(sample.len(), 3);
    }

    proptest! {
        // The tilted mean is monotone increasing in the tilt (its derivative
        // is the tilted variance).
        #[test]
        fn prop_tilted_mean_monotone_in_beta(
            b1 in -2.0f64..2.0,
            b2 in -2.0f64..2.0,
            mu in -1.0f64..1.0,
        ) {
            prop_assume!((b1 - b2).abs() > 1e-9);
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            let models = [
                MajorityModel::gaussian_1d(mu, 1.3).unwrap(),
                MajorityModel::empirical_1d(&[mu - 1.0, mu + 0.3, mu + 2.0]).unwrap(),
            ];
            for model in &models {
                let m_lo = model.tilted_moments(&[lo], TiltPower::One).unwrap();
                let m_hi = model.tilted_moments(&[hi], TiltPower::One).unwrap();
                prop_assert!(m_lo.mean()[0] < m_hi.mean()[0]);
            }
        }

        // Tilted covariance stays PSD (nonnegative variance in 1D).
        #[test]
        fn prop_tilted_variance_nonnegative(t in -3.0f64..3.0) {
            let model = MajorityModel::empirical_1d(&[-1.0, 0.0, 2.0]).unwrap();
            let m = model.tilted_moments(&[t], TiltPower::One).unwrap();
            prop_assert!(m.covariance().get(0, 0) >= -1e-12);
        }
    }
}
