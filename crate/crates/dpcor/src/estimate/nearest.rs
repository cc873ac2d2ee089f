//! Nearest correlation matrix in the Frobenius norm, by alternating
//! projections between the PSD cone and the unit-diagonal affine set with
//! Dykstra's correction.

use nalgebra::DMatrix;

use crate::correlation::{min_eigenvalue, CorrelationMatrix, PSD_TOL};
use crate::error::{Error, Result};

const CONVERGENCE_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 10_000;

/// What the projection did to its input.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionInfo {
    /// Input was already a valid correlation matrix and was returned as-is.
    pub was_psd: bool,
    pub iterations: usize,
    /// Frobenius distance between input and output.
    pub frobenius_adjustment: f64,
}

fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let clamped = eig.eigenvalues.map(|e| e.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    // Symmetrize away eigenvector round-off.
    for i in 0..out.nrows() {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn set_unit_diagonal(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        m[(i, i)] = 1.0;
    }
}

/// Project a symmetric unit-diagonal matrix onto the set of valid
/// correlation matrices. A matrix that is already PSD (to tolerance) is
/// returned unchanged.
pub fn nearest_correlation(input: &DMatrix<f64>) -> Result<(CorrelationMatrix, ProjectionInfo)> {
    let p = input.nrows();
    if p < 2 || input.ncols() != p {
        return Err(Error::Shape(format!(
            "projection needs a square matrix with p >= 2, got {}x{}",
            p,
            input.ncols()
        )));
    }
    let mut a = input.clone();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    set_unit_diagonal(&mut a);

    if min_eigenvalue(&a) >= -PSD_TOL {
        let m = CorrelationMatrix::new(a)?;
        return Ok((
            m,
            ProjectionInfo {
                was_psd: true,
                iterations: 0,
                frobenius_adjustment: 0.0,
            },
        ));
    }

    let mut y = a.clone();
    let mut correction = DMatrix::zeros(p, p);
    for it in 1..=MAX_ITERATIONS {
        let r = &y - &correction;
        let x = psd_project(&r);
        correction = &x - &r;
        let mut y_next = x;
        set_unit_diagonal(&mut y_next);
        let diff = (&y_next - &y).norm();
        y = y_next;
        if diff < CONVERGENCE_TOL {
            // The diagonal step can leave a residual negative eigenvalue of
            // the same order as the tolerance; rescale through the PSD cone
            // if needed so the output always validates.
            if min_eigenvalue(&y) < -PSD_TOL {
                let x = psd_project(&y);
                let d: Vec<f64> = (0..p).map(|i| x[(i, i)].sqrt()).collect();
                for i in 0..p {
                    for j in 0..p {
                        y[(i, j)] = x[(i, j)] / (d[i] * d[j]);
                    }
                }
                set_unit_diagonal(&mut y);
            }
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        y[(i, j)] = y[(i, j)].clamp(-1.0, 1.0);
                    }
                }
            }
            let adjustment = (&y - &a).norm();
            let m = CorrelationMatrix::new(y)?;
            return Ok((
                m,
                ProjectionInfo {
                    was_psd: false,
                    iterations: it,
                    frobenius_adjustment: adjustment,
                },
            ));
        }
    }
    Err(Error::Numerical(format!(
        "nearest-correlation projection did not converge in {MAX_ITERATIONS} iterations"
    )))
}
