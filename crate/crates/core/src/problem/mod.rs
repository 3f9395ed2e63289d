//! The linear system `A x = b`, its Jacobi splitting `x <- M x + c` with
//! `M = I - D^{-1} A` and `c = D^{-1} b`, and the row partition across agents.

mod partition;
mod poisson;
mod sparse;
mod spectral;

pub use partition::{partition_rows, Partition};
pub use poisson::{analytic_solution, build_poisson, poisson_matrix, poisson_rhs};
pub use sparse::CsrMatrix;
pub use spectral::{compute_spectral_constants, SpectralConstants, SpectralMethod, DENSE_LIMIT};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Immutable problem description shared by every agent.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    /// Diagonal of `A`.
    pub diag: Vec<f64>,
    /// Jacobi iteration matrix `I - D^{-1} A`; its diagonal is identically zero
    /// and is not stored.
    pub iteration: CsrMatrix,
    pub c: Vec<f64>,
    pub sigma_min_a: f64,
    pub sigma_max_m: f64,
    pub cond_a: f64,
    pub x_star: Vec<f64>,
}

impl SparseSystem {
    /// Assembles a system from an arbitrary square matrix, computing the
    /// spectral constants numerically.
    pub fn new(a: CsrMatrix, b: Vec<f64>) -> Result<Self> {
        let spectral = compute_spectral_constants(&a, SpectralMethod::Auto)?;
        Self::with_spectral(a, b, spectral)
    }

    pub fn with_spectral(a: CsrMatrix, b: Vec<f64>, spectral: SpectralConstants) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument(format!(
                "matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != a.nrows() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                a.nrows()
            )));
        }
        if spectral.sigma_max_m >= 1.0 {
            return Err(Error::NotContractive {
                sigma_max_m: spectral.sigma_max_m,
            });
        }
        let diag = a.diagonal();
        if let Some(row) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDiagonal { row });
        }
        let iteration = jacobi_iteration_matrix(&a)?;
        let c = b.iter().zip(&diag).map(|(bi, di)| bi / di).collect();
        let x_star = direct_solve(&a, &b)?;
        Ok(Self {
            a,
            b,
            diag,
            iteration,
            c,
            sigma_min_a: spectral.sigma_min_a,
            sigma_max_m: spectral.sigma_max_m,
            cond_a: spectral.cond_a(),
            x_star,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn norm_b(&self) -> f64 {
        norm2(&self.b)
    }
}

/// `M = I - D^{-1} A`, keeping only the off-diagonal nonzeros.
pub fn jacobi_iteration_matrix(a: &CsrMatrix) -> Result<CsrMatrix> {
    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDiagonal { row });
    }
    let mut triplets = Vec::with_capacity(a.nnz());
    for (r, &d) in diag.iter().enumerate() {
        for (c, v) in a.row(r) {
            if c != r && v != 0.0 {
                triplets.push((r, c, -v / d));
            }
        }
    }
    CsrMatrix::from_triplets(a.nrows(), a.ncols(), triplets)
}

/// Dense LU solve with a relative residual check of `1e-12`.
pub fn direct_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let dense: DMatrix<f64> = a.to_dense();
    let rhs = DVector::from_column_slice(b);
    let x = dense.lu().solve(&rhs).ok_or(Error::Singular)?;
    let x: Vec<f64> = x.iter().copied().collect();
    let ax = a.mul_vec(&x);
    let res: Vec<f64> = ax.iter().zip(b).map(|(l, r)| l - r).collect();
    let nb = norm2(b);
    let rel = if nb > 0.0 {
        norm2(&res) / nb
    } else {
        norm2(&res)
    };
    if !(rel <= 1e-12) {
        return Err(Error::Singular);
    }
    Ok(x)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| {
        if x.is_nan() {
            f64::NAN
        } else {
            acc.max(x.abs())
        }
    })
}

/// `||x - reference||_2 / ||reference||_2`. Non-finite entries propagate.
pub fn relative_error(x: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = x
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    diff / norm2(reference)
}
