//! One-dimensional quadrature: Gauss–Hermite rules for Gaussian weights,
//! adaptive Simpson for generic densities, and exact-sum rules for empirical
//! models.

use super::NumericsError;

/// What kind of integration a [`QuadratureRule`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    /// Nodes/weights integrate `f` against the weight `exp(-x^2)` on the
    /// whole real line; weights sum to `sqrt(pi)`.
    GaussHermite,
    /// Composite Simpson panels on a truncated support, adaptively refined.
    AdaptiveSimpson,
    /// Uniform atom weights `1/N`; nodes are atom locations (1D) or atom
    /// indices (multivariate empirical models).
    ExactSum,
}

/// A fixed set of abscissae and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: QuadKind,
}

impl QuadratureRule {
    fn new(nodes: Vec<f64>, weights: Vec<f64>, kind: QuadKind) -> Self {
        debug_assert_eq!(nodes.len(), weights.len());
        debug_assert!(weights.iter().all(|&w| w > 0.0));
        Self {
            nodes,
            weights,
            kind,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> QuadKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sum of `f` over the nodes.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Model shapes a quadrature rule can be requested for.
pub enum ModelKind<'a> {
    /// A Gaussian model of any dimension; the rule integrates against the
    /// standardized 1D weight and callers complete the square per axis.
    Gaussian,
    /// An empirical model; atoms of dimension 1 become nodes directly,
    /// higher dimensions get index nodes with uniform weights.
    Empirical(&'a [Vec<f64>]),
    /// A generic density of the stated dimension on the given support.
    /// Only `dim == 1` is integrable here.
    Density {
        pdf: &'a (dyn Fn(f64) -> f64 + Sync),
        support: (f64, f64),
        dim: usize,
    },
}

/// Builds the quadrature rule matching a model shape.
///
/// `order` controls the Gauss–Hermite size and the initial Simpson panel
/// count; empirical rules ignore it.
pub fn make_quadrature(
    kind: &ModelKind<'_>,
    order: usize,
) -> Result<QuadratureRule, NumericsError> {
    if order < 2 {
        return Err(NumericsError::DomainError(format!(
            "quadrature order must be at least 2, got {order}"
        )));
    }
    match kind {
        ModelKind::Gaussian => Ok(gauss_hermite(order)),
        ModelKind::Empirical(points) => {
            let n = points.len();
            if n == 0 {
                return Err(NumericsError::DomainError(
                    "empirical rule needs at least one atom".into(),
                ));
            }
            let dim = points[0].len();
            let nodes: Vec<f64> = if dim == 1 {
                points.iter().map(|p| p[0]).collect()
            } else {
                (0..n).map(|i| i as f64).collect()
            };
            let w = 1.0 / n as f64;
            Ok(QuadratureRule::new(nodes, vec![w; n], QuadKind::ExactSum))
        }
        ModelKind::Density { pdf, support, dim } => {
            if *dim != 1 {
                return Err(NumericsError::UnsupportedDimension(*dim));
            }
            let (a, b) = truncate_support(pdf, *support);
            Ok(simpson_rule(pdf, a, b, order))
        }
    }
}

/// Gauss–Hermite nodes and weights for the physicists' weight `exp(-x^2)`.
///
/// Uses the standard Newton iteration on the three-term Hermite recurrence;
/// a rule of size `n` integrates polynomials of degree `2n - 1` exactly and
/// its weights sum to `sqrt(pi)`.
pub fn gauss_hermite(n: usize) -> QuadratureRule {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    const EPS: f64 = 1e-14;
    const MAX_NEWTON: usize = 64;

    let mut nodes = vec![0.0_f64; n];
    let mut weights = vec![0.0_f64; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        // Initial guesses from the Stroud/Secrest asymptotics, then march
        // inward from the previous root.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..MAX_NEWTON {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // The recurrence yields roots in decreasing order; flip to ascending.
    nodes.reverse();
    weights.reverse();
    QuadratureRule::new(nodes, weights, QuadKind::GaussHermite)
}

/// Shrinks `support` to where `pdf` is at least `1e-14` of its peak, probing
/// a uniform grid. Keeps integration off numerically dead tails.
pub fn truncate_support(pdf: &(dyn Fn(f64) -> f64 + Sync), support: (f64, f64)) -> (f64, f64) {
    const PROBES: usize = 2048;
    let (a, b) = support;
    debug_assert!(a.is_finite() && b.is_finite() && a < b);
    let h = (b - a) / PROBES as f64;
    let values: Vec<f64> = (0..=PROBES).map(|i| pdf(a + i as f64 * h)).collect();
    let peak = values.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    if peak <= 0.0 {
        return (a, b);
    }
    let cutoff = peak * 1e-14;
    let lo = values.iter().position(|&v| v >= cutoff).unwrap_or(0);
    let hi = values
        .iter()
        .rposition(|&v| v >= cutoff)
        .unwrap_or(PROBES);
    (
        a + (lo.saturating_sub(1)) as f64 * h,
        a + (hi + 1).min(PROBES) as f64 * h,
    )
}

/// Composite Simpson rule with panels subdivided until each panel's Simpson
/// error estimate for `f` is below a per-panel share of `1e-10`.
fn simpson_rule(f: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64, order: usize) -> QuadratureRule {
    const TOL: f64 = 1e-10;
    const MAX_DEPTH: usize = 24;

    // Start from `order` uniform panels, then split any panel whose
    // five-point refinement disagrees with its three-point estimate.
    let mut panels: Vec<(f64, f64, usize)> = Vec::new();
    let h = (b - a) / order as f64;
    for i in 0..order {
        panels.push((a + i as f64 * h, a + (i + 1) as f64 * h, 0));
    }
    let mut accepted: Vec<(f64, f64)> = Vec::new();
    while let Some((lo, hi, depth)) = panels.pop() {
        let mid = 0.5 * (lo + hi);
        let coarse = simpson_panel(f, lo, hi);
        let fine = simpson_panel(f, lo, mid) + simpson_panel(f, mid, hi);
        let share = TOL * (hi - lo) / (b - a);
        if (fine - coarse).abs() <= 15.0 * share || depth >= MAX_DEPTH {
            accepted.push((lo, hi));
        } else {
            panels.push((lo, mid, depth + 1));
            panels.push((mid, hi, depth + 1));
        }
    }
    accepted.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut nodes = Vec::with_capacity(accepted.len() * 3);
    let mut weights = Vec::with_capacity(accepted.len() * 3);
    for (lo, hi) in accepted {
        let h6 = (hi - lo) / 6.0;
        nodes.extend_from_slice(&[lo, 0.5 * (lo + hi), hi]);
        weights.extend_from_slice(&[h6, 4.0 * h6, h6]);
    }
    QuadratureRule::new(nodes, weights, QuadKind::AdaptiveSimpson)
}

fn simpson_panel(f: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`. Handles `a > b` with the usual sign flip.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -adaptive_simpson(f, b, a, tol);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Depth 20 bounds the worst case at ~1e6 panels while leaving headroom
    // of ~(2^-20)^4 per-panel accuracy for smooth integrands.
    simpson_recurse(&f, a, b, fa, fb, fm, whole, tol, 20)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_recurse(f, a, m, fa, fm, flm, left, 0.5 * tol, depth - 1)
            + simpson_recurse(f, m, b, fm, fb, frm, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_pdf;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const SQRT_PI: f64 = 1.772_453_850_905_516;

    #[test]
    fn gauss_hermite_weights_sum_to_sqrt_pi() {
        for n in [2, 8, 16, 64] {
            let rule = gauss_hermite(n);
            assert_eq!(rule.len(), n);
            let total: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(total, SQRT_PI, epsilon = 1e-10);
        }
    }

    #[test]
    fn gauss_hermite_order_three_matches_textbook_values() {
        // Roots of H_3 are 0 and +/- sqrt(3/2).
        let rule = gauss_hermite(3);
        let expected_node = 1.224744871391589;
        assert_abs_diff_eq!(rule.nodes()[0], -expected_node, epsilon = 1e-13);
        assert_abs_diff_eq!(rule.nodes()[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(rule.nodes()[2], expected_node, epsilon = 1e-13);
        assert_abs_diff_eq!(rule.weights()[0], 0.29540897515091935, epsilon = 1e-13);
        assert_abs_diff_eq!(rule.weights()[1], 1.1816359006036774, epsilon = 1e-13);
    }

    #[test]
    fn gauss_hermite_second_moment_of_standard_normal() {
        // E[X^2] = 1 for X ~ N(0,1): substitute x = sqrt(2) t.
        let rule = gauss_hermite(64);
        let m2 = rule.integrate(|t| 2.0 * t * t) / SQRT_PI;
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_hermite_polynomial_exactness() {
        // Degree <= 2n-1 exactness against exp(-x^2): odd moments vanish,
        // even moment 2m is sqrt(pi) (2m-1)!! / 2^m.
        for n in 2..=10 {
            let rule = gauss_hermite(n);
            for deg in 0..=(2 * n - 1) {
                let got = rule.integrate(|x| x.powi(deg as i32));
                let expected = if deg % 2 == 1 {
                    0.0
                } else {
                    let m = deg / 2;
                    let mut dfact = 1.0;
                    let mut k = 2 * m as i64 - 1;
                    while k > 1 {
                        dfact *= k as f64;
                        k -= 2;
                    }
                    SQRT_PI * dfact / 2f64.powi(m as i32)
                };
                assert_abs_diff_eq!(got, expected, epsilon = 1e-10 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn empirical_rule_has_uniform_weights() {
        let points = vec![vec![1.0], vec![2.0], vec![3.0], vec![5.0]];
        let rule = make_quadrature(&ModelKind::Empirical(&points), 16).unwrap();
        assert_eq!(rule.kind(), QuadKind::ExactSum);
        assert_eq!(rule.nodes(), &[1.0, 2.0, 3.0, 5.0]);
        assert!(rule.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn multivariate_empirical_rule_indexes_atoms() {
        let points = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let rule = make_quadrature(&ModelKind::Empirical(&points), 16).unwrap();
        assert_eq!(rule.nodes(), &[0.0, 1.0]);
        assert!(rule.weights().iter().all(|&w| w == 0.5));
    }

    #[test]
    fn density_rule_integrates_standard_normal_moment() {
        let pdf = |x: f64| normal_pdf(x);
        let kind = ModelKind::Density {
            pdf: &pdf,
            support: (-12.0, 12.0),
            dim: 1,
        };
        let rule = make_quadrature(&kind, 64).unwrap();
        assert_eq!(rule.kind(), QuadKind::AdaptiveSimpson);
        let m2 = rule.integrate(|x| x * x * normal_pdf(x));
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn multivariate_density_is_rejected() {
        let pdf = |_: f64| 1.0;
        let kind = ModelKind::Density {
            pdf: &pdf,
            support: (0.0, 1.0),
            dim: 3,
        };
        assert!(matches!(
            make_quadrature(&kind, 16),
            Err(NumericsError::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn order_below_two_is_rejected() {
        assert!(matches!(
            make_quadrature(&ModelKind::Gaussian, 1),
            Err(NumericsError::DomainError(_))
        ));
    }

    #[test]
    fn adaptive_simpson_handles_known_integrals() {
        let i = adaptive_simpson(|x| x * x, 0.0, 1.0, 1e-12);
        assert_relative_eq!(i, 1.0 / 3.0, max_relative = 1e-12);
        let i = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12);
        assert_relative_eq!(i, 2.0, max_relative = 1e-11);
        // Reversed bounds flip the sign.
        let i = adaptive_simpson(|x| x, 1.0, 0.0, 1e-12);
        assert_relative_eq!(i, -0.5, max_relative = 1e-12);
    }

    #[test]
    fn truncation_trims_dead_tails() {
        let pdf = |x: f64| normal_pdf(x);
        let (a, b) = truncate_support(&pdf, (-100.0, 100.0));
        // Normal density is below 1e-14 of its peak beyond |x| ~ 8.03.
        assert!(a > -9.0 && a < -7.9);
        assert!(b < 9.0 && b > 7.9);
    }
}
