//! Perron–Frobenius data of small nonnegative primitive matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SQUARINGS: usize = 80;
const CONVERGENCE: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct PerronData {
    pub radius: f64,
    /// Right eigenvector, positive, entries summing to one.
    pub right: DVector<f64>,
    /// Left eigenvector, positive, entries summing to one.
    pub left: DVector<f64>,
}

/// Perron root and eigenvectors of a primitive nonnegative matrix.
///
/// Normalized powers `M^(2^k)` converge to a multiple of `u w^T`; the
/// eigenvectors are read off its row and column sums and the root from the
/// quotient `sum(M u) / sum(u)`.
pub fn perron(m: &DMatrix<f64>) -> Result<PerronData> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Numerical("Perron data needs a nonempty square matrix".into()));
    }
    let mut b = normalized(m.clone())?;
    let mut converged = false;
    for _ in 0..MAX_SQUARINGS {
        let next = normalized(&b * &b)?;
        let change = (&next - &b).amax();
        b = next;
        if change < CONVERGENCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Perron squaring did not converge".into()));
    }
    if b.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numerical("matrix is not primitive".into()));
    }
    let right = unit_sum(b.column_sum())?;
    let left = unit_sum(b.row_sum().transpose())?;
    let radius = (m * &right).sum() / right.sum();
    Ok(PerronData { radius, right, left })
}

fn normalized(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Numerical("matrix power vanished or overflowed".into()));
    }
    m /= scale;
    Ok(m)
}

fn unit_sum(v: DVector<f64>) -> Result<DVector<f64>> {
    let s = v.sum();
    if !(s > 0.0) || v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numerical("Perron vector is not strictly positive".into()));
    }
    Ok(v / s)
}

/// Solves `v P = v`, `sum(v) = 1` directly by LU on the system with one
/// balance equation replaced by the normalization.
pub fn stationary_vector(p: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = p.nrows();
    let mut system = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let v = system.lu().solve(&rhs)?;
    v.iter().all(|x| x.is_finite()).then_some(v)
}
