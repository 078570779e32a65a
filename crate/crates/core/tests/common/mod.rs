#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use romd::support::{BlockSet, SupportPattern};
use romd::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Each (atom, sample) pair is kept with probability `density`.
pub fn random_pattern(rng: &mut ChaCha20Rng, k: usize, n: usize, density: f64) -> SupportPattern {
    let rows = (0..k)
        .map(|_| (0..n).filter(|_| rng.random_bool(density)).collect())
        .collect();
    SupportPattern::new(n, rows).unwrap()
}

pub fn random_blocks(rng: &mut ChaCha20Rng, pattern: &Arc<SupportPattern>, dim: usize) -> BlockSet {
    let blocks = pattern.rows().iter().map(|r| uniform(rng, dim, r.len())).collect();
    BlockSet::from_blocks(pattern.clone(), dim, blocks).unwrap()
}

pub fn vectorize(b: &BlockSet) -> DVector<f64> {
    let data: Vec<f64> = b.blocks().iter().flat_map(|m| m.as_slice().to_vec()).collect();
    DVector::from_vec(data)
}

pub fn unvectorize(v: &DVector<f64>, pattern: &Arc<SupportPattern>, dim: usize) -> BlockSet {
    let mut at = 0;
    let blocks = pattern
        .rows()
        .iter()
        .map(|r| {
            let len = dim * r.len();
            let m = DenseMatrix::from_column_slice(dim, r.len(), &v.as_slice()[at..at + len]);
            at += len;
            m
        })
        .collect();
    BlockSet::from_blocks(pattern.clone(), dim, blocks).unwrap()
}

/// Dense matrix of `q -> [q ; sum_k P_k^*(q_k)]` on vectorized blocks.
pub fn dense_operator(pattern: &SupportPattern, dim: usize) -> DenseMatrix {
    let unknowns = dim * pattern.total_len();
    let mut a = DenseMatrix::zeros(unknowns + dim * pattern.samples(), unknowns);
    let mut col = 0;
    for row in pattern.rows() {
        for &n in row {
            for i in 0..dim {
                a[(col, col)] = 1.0;
                a[(unknowns + n * dim + i, col)] = 1.0;
                col += 1;
            }
        }
    }
    a
}

/// Least-squares Q-step through dense normal equations, independent of the CG
/// code. `A^T A = I + S^T S` is positive definite.
pub fn dense_q_oracle(bk: &BlockSet, b0: &DenseMatrix) -> BlockSet {
    let pattern = bk.pattern().clone();
    if pattern.total_len() == 0 {
        return bk.clone();
    }
    let a = dense_operator(&pattern, bk.dim());
    let rhs = DVector::from_iterator(a.nrows(), vectorize(bk).iter().copied().chain(b0.iter().copied()));
    let sol = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * rhs));
    unvectorize(&sol, &pattern, bk.dim())
}

pub fn nuclear_norm(m: &DenseMatrix) -> f64 {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.sum()
}

/// Soft-thresholding through nalgebra's own SVD.
pub fn reference_svt(a: &DenseMatrix, tau: f64) -> DenseMatrix {
    if a.ncols() == 0 || a.nrows() == 0 {
        return a.clone();
    }
    let mut svd = a.clone().svd(true, true);
    svd.singular_values.apply(|s| *s = (*s - tau).max(0.0));
    svd.recompose().unwrap()
}

pub fn prox_objective(z: &DenseMatrix, z_hat: &DenseMatrix, rho: f64) -> f64 {
    nuclear_norm(z) + 0.5 * rho * (z - z_hat).norm_squared()
}
