//! Five-point finite-difference discretization of `-Δu = f` on the unit square
//! with homogeneous Dirichlet data and `f = 2π² sin(πx) sin(πy)`, whose exact
//! solution is `u = sin(πx) sin(πy)`.
//!
//! Unknown `k` sits at grid point `(x_i, y_j) = ((i+1)h, (j+1)h)` with
//! `i = k mod ell`, `j = k / ell` and `h = 1/(ell+1)`.

use std::f64::consts::PI;

use super::{CsrMatrix, SparseSystem, SpectralConstants};
use crate::{Error, Result};

fn check_ell(ell: usize) -> Result<()> {
    if ell == 0 {
        return Err(Error::InvalidArgument(
            "grid size ell must be at least 1".into(),
        ));
    }
    Ok(())
}

fn grid_point(ell: usize, k: usize) -> (f64, f64) {
    let h = 1.0 / (ell as f64 + 1.0);
    let i = k % ell;
    let j = k / ell;
    ((i as f64 + 1.0) * h, (j as f64 + 1.0) * h)
}

/// Block-tridiagonal matrix with `tridiag(-1, 4, -1)` diagonal blocks and `-I`
/// off-diagonal blocks.
pub fn poisson_matrix(ell: usize) -> Result<CsrMatrix> {
    check_ell(ell)?;
    let m = ell * ell;
    let mut t = Vec::with_capacity(5 * m);
    for k in 0..m {
        let (i, j) = (k % ell, k / ell);
        t.push((k, k, 4.0));
        if i > 0 {
            t.push((k, k - 1, -1.0));
        }
        if i + 1 < ell {
            t.push((k, k + 1, -1.0));
        }
        if j > 0 {
            t.push((k, k - ell, -1.0));
        }
        if j + 1 < ell {
            t.push((k, k + ell, -1.0));
        }
    }
    CsrMatrix::from_triplets(m, m, t)
}

/// `b_k = h² f(x_i, y_j)`, so that `A x = b` approximates the PDE solution.
pub fn poisson_rhs(ell: usize) -> Result<Vec<f64>> {
    check_ell(ell)?;
    let h = 1.0 / (ell as f64 + 1.0);
    Ok((0..ell * ell)
        .map(|k| {
            let (x, y) = grid_point(ell, k);
            h * h * 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()
        })
        .collect())
}

pub fn analytic_solution(ell: usize) -> Result<Vec<f64>> {
    check_ell(ell)?;
    Ok((0..ell * ell)
        .map(|k| {
            let (x, y) = grid_point(ell, k);
            (PI * x).sin() * (PI * y).sin()
        })
        .collect())
}

/// Closed-form extreme eigenvalues of the 2D Laplacian: `A` has spectrum
/// `4 - 2cos(pπh) - 2cos(qπh)`, and `M = I - A/4` is symmetric with spectral
/// radius `cos(πh)`.
pub fn poisson_spectral(ell: usize) -> SpectralConstants {
    let cos1 = (PI / (ell as f64 + 1.0)).cos();
    SpectralConstants {
        sigma_min_a: 4.0 - 4.0 * cos1,
        sigma_max_a: 4.0 + 4.0 * cos1,
        sigma_max_m: cos1,
    }
}

pub fn build_poisson(ell: usize) -> Result<SparseSystem> {
    let a = poisson_matrix(ell)?;
    let b = poisson_rhs(ell)?;
    SparseSystem::with_spectral(a, b, poisson_spectral(ell))
}
