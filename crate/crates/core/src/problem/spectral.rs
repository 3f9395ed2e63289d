//! Extreme singular values needed by the rejection bound: `σ_min(A)` and
//! `σ_max(M)` for `M = I - D^{-1} A`.
//!
//! Small systems use a dense SVD. Above [`DENSE_LIMIT`] rows the largest values
//! come from power iteration on `XᵀX` and `σ_min(A)` from inverse iteration on
//! `AᵀA`, with the inner solves done by conjugate gradients.

use rand::Rng;

use super::{jacobi_iteration_matrix, norm2, CsrMatrix};
use crate::rng;
use crate::{Error, Result};

pub const DENSE_LIMIT: usize = 2500;

const EIG_RESIDUAL_TOL: f64 = 1e-9;
const MAX_OUTER: usize = 200_000;
const MAX_CG: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstants {
    pub sigma_min_a: f64,
    pub sigma_max_a: f64,
    pub sigma_max_m: f64,
}

impl SpectralConstants {
    pub fn cond_a(&self) -> f64 {
        self.sigma_max_a / self.sigma_min_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectralMethod {
    /// Dense SVD up to [`DENSE_LIMIT`] rows, iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

pub fn compute_spectral_constants(
    a: &CsrMatrix,
    method: SpectralMethod,
) -> Result<SpectralConstants> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "spectral constants need a nonempty square matrix".into(),
        ));
    }
    let m = jacobi_iteration_matrix(a)?;
    let dense = match method {
        SpectralMethod::Auto => a.nrows() <= DENSE_LIMIT,
        SpectralMethod::Dense => true,
        SpectralMethod::Iterative => false,
    };
    let consts = if dense {
        dense_constants(a, &m)
    } else {
        iterative_constants(a, &m)?
    };
    if consts.sigma_max_m >= 1.0 {
        return Err(Error::NotContractive {
            sigma_max_m: consts.sigma_max_m,
        });
    }
    if !(consts.sigma_min_a > 0.0) {
        return Err(Error::Singular);
    }
    Ok(consts)
}

fn dense_constants(a: &CsrMatrix, m: &CsrMatrix) -> SpectralConstants {
    let sa = a.to_dense().singular_values();
    let sm = m.to_dense().singular_values();
    SpectralConstants {
        sigma_min_a: sa.min(),
        sigma_max_a: sa.max(),
        sigma_max_m: sm.max(),
    }
}

fn iterative_constants(a: &CsrMatrix, m: &CsrMatrix) -> Result<SpectralConstants> {
    Ok(SpectralConstants {
        sigma_min_a: smallest_singular_value(a)?,
        sigma_max_a: largest_singular_value(a)?,
        sigma_max_m: largest_singular_value(m)?,
    })
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut r = rng::stream(0x5eed, &[n as u64]);
    let v: Vec<f64> = (0..n).map(|_| 1.0 + 0.1 * r.random::<f64>()).collect();
    let nv = norm2(&v);
    v.into_iter().map(|x| x / nv).collect()
}

fn normal_op(a: &CsrMatrix, v: &[f64]) -> Vec<f64> {
    a.transpose_mul_vec(&a.mul_vec(v))
}

/// Power iteration on `XᵀX`.
pub(crate) fn largest_singular_value(x: &CsrMatrix) -> Result<f64> {
    let mut v = start_vector(x.ncols());
    for _ in 0..MAX_OUTER {
        let w = normal_op(x, &v);
        let lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        let res = norm2(
            &w.iter()
                .zip(&v)
                .map(|(wi, vi)| wi - lambda * vi)
                .collect::<Vec<_>>(),
        );
        let nw = norm2(&w);
        if res <= EIG_RESIDUAL_TOL * lambda {
            return Ok(lambda.sqrt());
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::NoConvergence {
        method: "power iteration",
        iterations: MAX_OUTER,
    })
}

/// Inverse iteration on `AᵀA`.
pub(crate) fn smallest_singular_value(a: &CsrMatrix) -> Result<f64> {
    let mut v = start_vector(a.ncols());
    for _ in 0..MAX_OUTER {
        let av = normal_op(a, &v);
        let lambda: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
        let res = norm2(
            &av.iter()
                .zip(&v)
                .map(|(w, x)| w - lambda * x)
                .collect::<Vec<_>>(),
        );
        if res <= EIG_RESIDUAL_TOL * lambda {
            return Ok(lambda.sqrt());
        }
        let y = conjugate_gradient(|z| normal_op(a, z), &v)?;
        let ny = norm2(&y);
        v = y.into_iter().map(|x| x / ny).collect();
    }
    Err(Error::NoConvergence {
        method: "inverse iteration",
        iterations: MAX_OUTER,
    })
}

fn conjugate_gradient(op: impl Fn(&[f64]) -> Vec<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = 1e-26 * rr;
    for _ in 0..MAX_CG {
        if rr <= stop {
            return Ok(x);
        }
        let ap = op(&p);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err(Error::NoConvergence {
        method: "conjugate gradients",
        iterations: MAX_CG,
    })
}
