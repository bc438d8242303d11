//! Dense symmetric positive-definite matrices with Cholesky factorization
//! and solves. Row-major storage; dimensions stay small so no blocking or
//! pivoting is needed.

use super::NumericsError;

/// Relative tolerance for the symmetry check on construction.
const SYMMETRY_RTOL: f64 = 1e-12;

/// A dense symmetric matrix intended for use as an SPD operand.
///
/// Symmetry is enforced at construction; positive definiteness is enforced
/// lazily, the first time a Cholesky factorization is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    // Row-major, dim * dim entries.
    entries: Vec<f64>,
}

impl SpdMatrix {
    /// Builds a matrix from rows, checking squareness, finiteness, and
    /// symmetry to within `1e-12` relative to the largest entry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(NumericsError::DomainError(
                "matrix must have at least one row".into(),
            ));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(NumericsError::DomainError(format!(
                    "expected a square {dim}x{dim} matrix, got a row of length {}",
                    row.len()
                )));
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(NumericsError::DomainError(
                        "matrix entries must be finite".into(),
                    ));
                }
                entries.push(v);
            }
        }
        let scale = entries.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                if (a - b).abs() > SYMMETRY_RTOL * scale.max(1.0) {
                    return Err(NumericsError::DomainError(format!(
                        "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    /// Builds from row-major entries that are symmetric by construction,
    /// averaging the off-diagonal pair to scrub roundoff.
    pub fn from_symmetric_parts(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        let mut m = Self { dim, entries };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (m.entries[i * dim + j] + m.entries[j * dim + i]);
                m.entries[i * dim + j] = avg;
                m.entries[j * dim + i] = avg;
            }
        }
        m
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// 1x1 convenience constructor.
    pub fn scalar(value: f64) -> Self {
        Self {
            dim: 1,
            entries: vec![value],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.entries[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.get(i, j) * x[j])
                    .sum::<f64>()
            })
            .collect()
    }

    /// Lower-triangular Cholesky factor `L` with `L L^T = self`.
    ///
    /// Fails with [`NumericsError::NotPositiveDefinite`] as soon as a pivot
    /// drops to zero or below.
    pub fn cholesky(&self) -> Result<CholeskyFactor, NumericsError> {
        let d = self.dim;
        let mut l = vec![0.0_f64; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(NumericsError::NotPositiveDefinite { index: i, pivot: s });
                    }
                    l[i * d + i] = s.sqrt();
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        Ok(CholeskyFactor { dim: d, l })
    }

    /// Solves `self * x = rhs` through the Cholesky factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, NumericsError> {
        Ok(self.cholesky()?.solve(rhs))
    }

    /// Solves `self * X = B` column by column, reusing one factorization.
    pub fn solve_matrix(&self, b: &SpdMatrix) -> Result<Vec<Vec<f64>>, NumericsError> {
        let chol = self.cholesky()?;
        let d = self.dim;
        let mut cols = Vec::with_capacity(d);
        for j in 0..d {
            let rhs: Vec<f64> = (0..d).map(|i| b.get(i, j)).collect();
            cols.push(chol.solve(&rhs));
        }
        // Transpose columns back into rows.
        Ok((0..d)
            .map(|i| (0..d).map(|j| cols[j][i]).collect())
            .collect())
    }
}

/// Lower-triangular Cholesky factor of an [`SpdMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    // Row-major lower triangle (upper part zero).
    l: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.l[i * self.dim + j]
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Euclidean norm of row `i`; equals `sqrt(Sigma_ii)` when this factors
    /// `Sigma`, which is what coordinatewise interval half-widths need.
    pub fn row_norm(&self, i: usize) -> f64 {
        (0..=i)
            .map(|j| self.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `L * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..=i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Solves `L y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = b[i];
            for j in 0..i {
                s -= self.get(i, j) * y[j];
            }
            y[i] = s / self.get(i, i);
        }
        y
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = self.solve_lower(b);
        // Back substitution with L^T.
        for i in (0..d).rev() {
            let mut s = x[i];
            for j in (i + 1)..d {
                s -= self.get(j, i) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        x
    }

    /// Recomputes `L L^T`, used by reconstruction checks.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        (0..=i.min(j))
                            .map(|k| self.get(i, k) * self.get(j, k))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}
