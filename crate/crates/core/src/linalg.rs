//! Dense matrices and the decompositions the rest of the crate builds on.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration. It is deterministic,
//! accurate to working precision in the relative sense, and its convergence
//! test is explicit, so a stalled run surfaces as an error instead of
//! returning garbage factors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomdError};

/// Real matrix stored column-major. Zero-column matrices are legal and show
/// up whenever an atom has an empty support.
pub type DenseMatrix = DMatrix<f64>;

/// Singular values below `RANK_TOL * sigma_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;
const TINY: f64 = 1e-280;

/// Thin singular value decomposition `A = U diag(s) Vt`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub singulars: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdFactors {
    /// Number of singular values above `RANK_TOL` relative to the largest.
    pub fn rank(&self) -> usize {
        let top = self.singulars.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.singulars.iter().filter(|&&s| s >= RANK_TOL * top).count()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, &s) in self.singulars.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * &self.vt
    }
}

/// Thin SVD of `a`. Left singular vectors are sign-normalized so that the
/// largest-magnitude entry of each is positive (first index wins ties).
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(RomdError::shape("svd", "non-empty matrix", format!("{m}x{n}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(RomdError::InvalidConfig("svd input has non-finite entries".into()));
    }

    let mut f = if m >= n {
        jacobi_tall(a)?
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        let t = jacobi_tall(&a.transpose())?;
        SvdFactors {
            u: t.vt.transpose(),
            singulars: t.singulars,
            vt: t.u.transpose(),
        }
    };
    fix_signs(&mut f);
    Ok(f)
}

fn jacobi_tall(a: &DenseMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n, n);
    let tol = (m as f64) * f64::EPSILON;

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = w.column(p);
                    let wq = w.column(q);
                    (wp.norm_squared(), wq.norm_squared(), wp.dot(&wq))
                };
                if alpha < TINY || beta < TINY {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(RomdError::SvdNotConverged { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = DenseMatrix::zeros(m, n);
    let mut vt = DenseMatrix::zeros(n, n);
    let mut singulars = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        singulars.push(s);
        if s > TINY {
            u.set_column(dst, &(w.column(src) / s));
        } else {
            missing.push(dst);
        }
        vt.set_row(dst, &v.column(src).transpose());
    }
    if !missing.is_empty() {
        complete_basis(&mut u, &missing);
    }
    Ok(SvdFactors { u, singulars, vt })
}

#[inline]
fn rotate_columns(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = a.nrows();
    let data = a.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fill the listed columns of `u` with unit vectors orthogonal to every
/// other column (those belonging to exactly-zero singular values).
fn complete_basis(u: &mut DenseMatrix, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    for &slot in missing {
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = -1.0;
        for e in 0..m {
            let mut cand = DVector::zeros(m);
            cand[e] = 1.0;
            for _ in 0..2 {
                for &j in &filled {
                    let proj = u.column(j).dot(&cand);
                    cand.axpy(-proj, &u.column(j), 1.0);
                }
            }
            let nrm = cand.norm();
            if nrm > best_norm + 1e-12 {
                best_norm = nrm;
                best = Some(cand);
            }
        }
        if let Some(b) = best {
            if best_norm > 0.0 {
                u.set_column(slot, &(b / best_norm));
            }
        }
        filled.push(slot);
    }
}

fn fix_signs(f: &mut SvdFactors) {
    for j in 0..f.u.ncols() {
        let col = f.u.column(j);
        let mut idx = 0;
        let mut best = -1.0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            f.u.column_mut(j).neg_mut();
            f.vt.row_mut(j).neg_mut();
        }
    }
}

/// Scale every column to unit l2 norm. Returns the original norms.
pub fn normalize_columns(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut out = a.clone();
    let mut scales = Vec::with_capacity(a.ncols());
    for j in 0..a.ncols() {
        let nrm = a.column(j).norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(RomdError::ZeroColumn { index: j });
        }
        out.column_mut(j).unscale_mut(nrm);
        scales.push(nrm);
    }
    Ok((out, scales))
}

/// Minimum-norm least-squares solution of `A X = B` via the pseudoinverse.
pub fn lstsq(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.nrows() != b.nrows() {
        return Err(RomdError::shape(
            "lstsq",
            format!("{} rows in B", a.nrows()),
            format!("{} rows", b.nrows()),
        ));
    }
    if a.ncols() == 0 {
        return Ok(DenseMatrix::zeros(0, b.ncols()));
    }
    let f = svd(a)?;
    let r = f.rank();
    // X = V_r S_r^{-1} U_r^T B
    let mut utb = f.u.columns(0, r).transpose() * b;
    for i in 0..r {
        utb.row_mut(i).unscale_mut(f.singulars[i]);
    }
    Ok(f.vt.rows(0, r).transpose() * utb)
}

/// Frobenius inner product.
pub fn inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.dot(b)
}

pub fn is_finite(a: &DenseMatrix) -> bool {
    a.iter().all(|v| v.is_finite())
}
