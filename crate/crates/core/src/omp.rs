//! Orthogonal matching pursuit with a fixed dictionary.
//!
//! Each column keeps an orthonormal basis of its selected atoms (modified
//! Gram-Schmidt, applied twice), so the residual stays orthogonal to the
//! selection and the least-squares refit is a triangular solve.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Result, RomdError};
use crate::linalg::DenseMatrix;

/// An atom whose component outside the current selection is shorter than
/// this is treated as linearly dependent on it.
const DEPENDENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OmpConfig {
    pub sparsity: usize,
    /// Stop early once `||r|| <= residual_tol * ||y||`.
    pub residual_tol: f64,
}

impl OmpConfig {
    pub fn new(sparsity: usize) -> Self {
        Self { sparsity, residual_tol: 1e-9 }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.sparsity == 0 || self.sparsity > m {
            return Err(RomdError::InvalidConfig(format!("sparsity {} must lie in 1..={m}", self.sparsity)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnCode {
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    /// Residual norm after each selection, starting with `||y||`.
    pub residual_norms: Vec<f64>,
    /// At least one selected atom was dependent on the others and dropped.
    pub degenerate: bool,
}

pub fn omp_column(y: &DVector<f64>, d: &DenseMatrix, cfg: &OmpConfig) -> ColumnCode {
    let (m, k) = d.shape();
    let y_norm = y.norm();
    let mut code = ColumnCode {
        support: Vec::new(),
        values: Vec::new(),
        residual_norms: vec![y_norm],
        degenerate: false,
    };
    if y_norm == 0.0 {
        return code;
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cfg.sparsity);
    // r_factor[j] holds column j of the upper-triangular R in D_sel = Q R
    let mut r_factor: Vec<Vec<f64>> = Vec::with_capacity(cfg.sparsity);
    let mut blocked = vec![false; k];
    let mut residual = y.clone();

    while code.support.len() < cfg.sparsity {
        if residual.norm() <= cfg.residual_tol * y_norm {
            break;
        }
        let corr = d.tr_mul(&residual);
        let mut best = None;
        let mut best_val = 0.0;
        for (j, c) in corr.iter().enumerate() {
            if !blocked[j] && c.abs() > best_val {
                best_val = c.abs();
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        blocked[j] = true;

        let atom = d.column(j).into_owned();
        let mut w = atom.clone();
        let mut coeffs = vec![0.0; basis.len() + 1];
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = q.dot(&w);
                coeffs[i] += c;
                w.axpy(-c, q, 1.0);
            }
        }
        let w_norm = w.norm();
        if w_norm < DEPENDENT_TOL * atom.norm().max(f64::MIN_POSITIVE) || m == basis.len() {
            code.degenerate = true;
            continue;
        }
        coeffs[basis.len()] = w_norm;
        let q_new = w / w_norm;
        // keep the residual orthogonal to the whole basis
        let proj = q_new.dot(&residual);
        residual.axpy(-proj, &q_new, 1.0);
        basis.push(q_new);
        for q in &basis {
            let c = q.dot(&residual);
            residual.axpy(-c, q, 1.0);
        }
        r_factor.push(coeffs);
        code.support.push(j);
        code.residual_norms.push(residual.norm());
    }

    // back-substitution R c = Q^T y
    let s = basis.len();
    let rhs: Vec<f64> = basis.iter().map(|q| q.dot(y)).collect();
    let mut values = vec![0.0; s];
    for i in (0..s).rev() {
        let mut acc = rhs[i];
        for j in (i + 1)..s {
            acc -= r_factor[j][i] * values[j];
        }
        values[i] = acc / r_factor[i][i];
    }
    code.values = values;
    code
}

/// Encode every column of `y`. Columns are independent and run in parallel.
pub fn omp_encode(y: &DenseMatrix, d: &DenseMatrix, cfg: &OmpConfig) -> Result<DenseMatrix> {
    Ok(omp_encode_detailed(y, d, cfg)?.0)
}

/// As [`omp_encode`], also returning the indices of columns where a
/// dependent atom had to be dropped.
pub fn omp_encode_detailed(y: &DenseMatrix, d: &DenseMatrix, cfg: &OmpConfig) -> Result<(DenseMatrix, Vec<usize>)> {
    if y.nrows() != d.nrows() {
        return Err(RomdError::shape("omp_encode", d.nrows(), y.nrows()));
    }
    cfg.validate(d.nrows())?;
    let codes: Vec<ColumnCode> = (0..y.ncols())
        .into_par_iter()
        .map(|n| omp_column(&y.column(n).into_owned(), d, cfg))
        .collect();
    let mut x = DenseMatrix::zeros(d.ncols(), y.ncols());
    let mut flagged = Vec::new();
    for (n, c) in codes.iter().enumerate() {
        for (&k, &v) in c.support.iter().zip(&c.values) {
            x[(k, n)] = v;
        }
        if c.degenerate {
            flagged.push(n);
        }
    }
    Ok((x, flagged))
}
