//! The correlation-matrix domain type: symmetric, unit diagonal, positive
//! semidefinite up to a small tolerance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrant::{pair_count, pair_iter};

/// Eigenvalue slack below zero that still counts as PSD.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    m: DMatrix<f64>,
    p: usize,
}

impl CorrelationMatrix {
    pub fn identity(p: usize) -> Self {
        Self {
            m: DMatrix::identity(p, p),
            p,
        }
    }

    /// Validate and wrap a matrix. Requires symmetry (to 1e-10), a unit
    /// diagonal, off-diagonals in `[-1, 1]`, and smallest eigenvalue
    /// `>= -PSD_TOL`. The stored matrix is exactly symmetrized.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if p < 2 || m.ncols() != p {
            return Err(Error::Shape(format!(
                "correlation matrix must be square with p >= 2, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..p {
            if (m[(i, i)] - 1.0).abs() > 1e-10 {
                return Err(Error::Validation(format!(
                    "diagonal entry ({i},{i}) = {} is not 1",
                    m[(i, i)]
                )));
            }
            for j in i + 1..p {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Validation(format!(
                        "asymmetric entries at ({i},{j})"
                    )));
                }
                if m[(i, j)].abs() > 1.0 + 1e-12 {
                    return Err(Error::Validation(format!(
                        "off-diagonal ({i},{j}) = {} outside [-1, 1]",
                        m[(i, j)]
                    )));
                }
            }
        }
        let mut sym = m.clone();
        for i in 0..p {
            sym[(i, i)] = 1.0;
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                let v = v.clamp(-1.0, 1.0);
                sym[(i, j)] = v;
                sym[(j, i)] = v;
            }
        }
        let min_eig = min_eigenvalue(&sym);
        if min_eig < -PSD_TOL {
            return Err(Error::Validation(format!(
                "matrix is not PSD (smallest eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { m: sym, p })
    }

    /// Build from off-diagonals in lexicographic pair order.
    pub fn from_pairs(p: usize, offdiag: &[f64]) -> Result<Self> {
        Self::new(matrix_from_pairs(p, offdiag)?)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Off-diagonals in lexicographic pair order.
    pub fn offdiag(&self) -> Vec<f64> {
        pair_iter(self.p).map(|(j, jp)| self.m[(j, jp)]).collect()
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<f64> {
        (0..self.p)
            .flat_map(|i| (0..self.p).map(move |j| (i, j)))
            .map(|(i, j)| self.m[(i, j)])
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m)
    }
}

/// Assemble a symmetric unit-diagonal matrix from pair values, without the
/// PSD check (independently estimated pairs may not be PSD).
pub fn matrix_from_pairs(p: usize, offdiag: &[f64]) -> Result<DMatrix<f64>> {
    if offdiag.len() != pair_count(p) {
        return Err(Error::Shape(format!(
            "expected {} off-diagonals for p={p}, got {}",
            pair_count(p),
            offdiag.len()
        )));
    }
    let mut m = DMatrix::identity(p, p);
    for (idx, (j, jp)) in pair_iter(p).enumerate() {
        m[(j, jp)] = offdiag[idx];
        m[(jp, j)] = offdiag[idx];
    }
    Ok(m)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
