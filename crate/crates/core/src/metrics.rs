//! Dictionary recovery error with greedy atom matching.

use log::warn;

use crate::error::{Result, RomdError};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// `(1/K) sum_k (1 - similarity_k)`, in `[0, 2]`.
    pub error: f64,
    /// `assignment[k]` is the true atom matched to estimated atom `k`.
    pub assignment: Vec<usize>,
    pub per_atom_similarity: Vec<f64>,
}

fn unit_columns(d: &DenseMatrix, which: &str) -> DenseMatrix {
    let mut out = d.clone();
    for j in 0..d.ncols() {
        let n = d.column(j).norm();
        if (n - 1.0).abs() > 1e-8 {
            warn!("{which} column {j} has norm {n}; normalizing before matching");
            if n > 0.0 {
                out.column_mut(j).unscale_mut(n);
            }
        }
    }
    out
}

/// Greedy matching in ascending estimated-atom order: atom `k` takes the
/// unassigned true atom with the largest inner product (absolute value when
/// `sign_invariant`). Ties go to the lowest true index.
pub fn recovery_error(d_hat: &DenseMatrix, d_true: &DenseMatrix, sign_invariant: bool) -> Result<MatchReport> {
    if d_hat.shape() != d_true.shape() {
        return Err(RomdError::shape(
            "recovery_error",
            format!("{}x{}", d_true.nrows(), d_true.ncols()),
            format!("{}x{}", d_hat.nrows(), d_hat.ncols()),
        ));
    }
    let k_atoms = d_true.ncols();
    if k_atoms == 0 {
        return Ok(MatchReport { error: 0.0, assignment: vec![], per_atom_similarity: vec![] });
    }
    let est = unit_columns(d_hat, "estimated dictionary");
    let truth = unit_columns(d_true, "true dictionary");
    let gram = est.transpose() * &truth;

    let mut taken = vec![false; k_atoms];
    let mut assignment = Vec::with_capacity(k_atoms);
    let mut sims = Vec::with_capacity(k_atoms);
    for k in 0..k_atoms {
        let mut best_i = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for i in 0..k_atoms {
            if taken[i] {
                continue;
            }
            let g = gram[(k, i)];
            let score = if sign_invariant { g.abs() } else { g };
            if score > best {
                best = score;
                best_i = i;
            }
        }
        taken[best_i] = true;
        assignment.push(best_i);
        sims.push(best.clamp(-1.0, 1.0));
    }
    let error = sims.iter().map(|s| 1.0 - s).sum::<f64>() / k_atoms as f64;
    Ok(MatchReport { error, assignment, per_atom_similarity: sims })
}

/// Same metric with an optimal (rather than greedy) assignment, found by
/// Hungarian-style augmentation. Diagnostic only.
pub fn optimal_recovery_error(d_hat: &DenseMatrix, d_true: &DenseMatrix, sign_invariant: bool) -> Result<f64> {
    if d_hat.shape() != d_true.shape() {
        return Err(RomdError::shape("optimal_recovery_error", d_true.ncols(), d_hat.ncols()));
    }
    let k = d_true.ncols();
    let gram = unit_columns(d_hat, "estimated dictionary").transpose() * unit_columns(d_true, "true dictionary");
    // cost[i][j] = 1 - sim
    let cost = |i: usize, j: usize| {
        let g = gram[(i, j)];
        1.0 - if sign_invariant { g.abs() } else { g }
    };
    // O(K^3) shortest augmenting path on a dense square matrix, 1-based.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let total: f64 = (1..=k).map(|j| cost(p[j] - 1, j - 1)).sum();
    Ok(total / k as f64)
}

/// `||Y - D X||_F / ||Y||_F`
pub fn fit_residual(y: &DenseMatrix, d: &DenseMatrix, x: &DenseMatrix) -> f64 {
    let denom = y.norm();
    let r = (y - d * x).norm();
    if denom > 0.0 {
        r / denom
    } else {
        r
    }
}
