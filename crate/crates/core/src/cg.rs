//! Conjugate gradient for the block least-squares problem behind the Q-step
//!
//! ```text
//! minimize  sum_k ||Q_k - B_k||_F^2 + ||sum_k P_k^*(Q_k) - B_0||_F^2
//! ```
//!
//! The stacked operator `A q = [q_1, .., q_K ; sum_k P_k^*(q_k)]` is applied
//! through gather/scatter only. `A^T A q` has the block form
//! `q_k + P_k(sum_j P_j^*(q_j))`, so its spectrum is `{1} ∪ {1 + s}` where
//! `s` ranges over column multiplicities; CG terminates in a handful of steps.

use std::sync::Arc;

use crate::error::{Result, RomdError};
use crate::linalg::DenseMatrix;
use crate::support::{gather, sum_scatter_into, BlockSet, SupportPattern};

/// `A p` split into its per-atom part and its full `M x N` part.
#[derive(Debug, Clone)]
pub struct ForwardImage {
    pub blocks: BlockSet,
    pub full: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Normal-equation residual norm before each step and after the last one.
    pub residual_history: Vec<f64>,
}

pub fn apply_forward(p: &BlockSet) -> ForwardImage {
    let mut full = DenseMatrix::zeros(p.dim(), p.pattern().samples());
    sum_scatter_into(p, &mut full);
    ForwardImage { blocks: p.clone(), full }
}

/// `A^T (blocks, full)`: `blocks_k + P_k(full)`.
pub fn apply_adjoint(blocks: &BlockSet, full: &DenseMatrix) -> Result<BlockSet> {
    let mut out = blocks.clone();
    add_gathered(&mut out, full)?;
    Ok(out)
}

/// `A^T A p` without forming `A`.
pub fn apply_normal(p: &BlockSet) -> BlockSet {
    let mut full = DenseMatrix::zeros(p.dim(), p.pattern().samples());
    let mut out = p.clone();
    normal_into(p, &mut full, &mut out);
    out
}

fn add_gathered(out: &mut BlockSet, full: &DenseMatrix) -> Result<()> {
    let pattern = out.pattern().clone();
    if full.ncols() != pattern.samples() || full.nrows() != out.dim() {
        return Err(RomdError::shape(
            "apply_adjoint",
            format!("{}x{}", out.dim(), pattern.samples()),
            format!("{}x{}", full.nrows(), full.ncols()),
        ));
    }
    for k in 0..pattern.atoms() {
        let blk = out.block_mut(k);
        for (j, &n) in pattern.row(k).iter().enumerate() {
            let mut dst = blk.column_mut(j);
            dst += full.column(n);
        }
    }
    Ok(())
}

// out <- p + P(sum P^*(p)), reusing `scratch` for the full-size sum.
fn normal_into(p: &BlockSet, scratch: &mut DenseMatrix, out: &mut BlockSet) {
    sum_scatter_into(p, scratch);
    let pattern = p.pattern().clone();
    for k in 0..pattern.atoms() {
        let src = p.block(k);
        let dst = out.block_mut(k);
        dst.copy_from(src);
        for (j, &n) in pattern.row(k).iter().enumerate() {
            let mut c = dst.column_mut(j);
            c += scratch.column(n);
        }
    }
}

/// Iterates and scratch buffers for one CG solve.
#[derive(Debug, Clone)]
pub struct CgWorkspace {
    pub q: BlockSet,
    pub r: BlockSet,
    pub p: BlockSet,
    w: BlockSet,
    pub scratch_full: DenseMatrix,
    pub alpha: f64,
    pub beta: f64,
}

impl CgWorkspace {
    pub fn new(pattern: Arc<SupportPattern>, dim: usize) -> Self {
        let z = BlockSet::zeros(pattern.clone(), dim);
        Self {
            q: z.clone(),
            r: z.clone(),
            p: z.clone(),
            w: z,
            scratch_full: DenseMatrix::zeros(dim, pattern.samples()),
            alpha: 0.0,
            beta: 0.0,
        }
    }

    /// CGNR from the current `self.q`. `tol` is relative to `||A^T b||`.
    pub fn solve(&mut self, rhs_blocks: &BlockSet, rhs_full: &DenseMatrix, tol: f64, max_iter: usize) -> Result<CgReport> {
        if !self.q.same_layout(rhs_blocks) {
            return Err(RomdError::shape("solve_q_update", "matching block layout", "different layout"));
        }
        // r = A^T b - A^T A q
        let atb = apply_adjoint(rhs_blocks, rhs_full)?;
        let atb_norm = atb.norm();
        if !atb_norm.is_finite() {
            return Err(RomdError::CgNonFinite { iteration: 0 });
        }
        normal_into(&self.q, &mut self.scratch_full, &mut self.w);
        self.r.clone_from(&atb);
        self.r.axpy(-1.0, &self.w);
        self.p.clone_from(&self.r);

        let target = tol * atb_norm;
        let mut rr = self.r.norm_squared();
        let mut history = vec![rr.sqrt()];
        let mut iterations = 0;
        while rr.sqrt() > target && iterations < max_iter {
            // |A p|^2 = |p|^2 + |sum P^*(p)|^2
            sum_scatter_into(&self.p, &mut self.scratch_full);
            let denom = self.p.norm_squared() + self.scratch_full.norm_squared();
            if denom == 0.0 {
                break;
            }
            self.alpha = rr / denom;
            self.q.axpy(self.alpha, &self.p);
            normal_into(&self.p, &mut self.scratch_full, &mut self.w);
            self.r.axpy(-self.alpha, &self.w);
            let rr_new = self.r.norm_squared();
            iterations += 1;
            if !rr_new.is_finite() || !self.alpha.is_finite() {
                return Err(RomdError::CgNonFinite { iteration: iterations });
            }
            self.beta = rr_new / rr;
            self.p.xpby(&self.r, self.beta);
            rr = rr_new;
            history.push(rr.sqrt());
        }
        let final_residual = rr.sqrt();
        Ok(CgReport {
            iterations,
            final_residual,
            converged: final_residual <= target,
            residual_history: history,
        })
    }
}

/// Solve the Q-step from `warm` (zero when absent).
pub fn solve_q_update(
    rhs_blocks: &BlockSet,
    rhs_full: &DenseMatrix,
    warm: Option<&BlockSet>,
    tol: f64,
    max_iter: usize,
) -> Result<(BlockSet, CgReport)> {
    let mut ws = CgWorkspace::new(rhs_blocks.pattern().clone(), rhs_blocks.dim());
    if let Some(w) = warm {
        if !w.same_layout(rhs_blocks) {
            return Err(RomdError::shape("solve_q_update", "warm start with matching layout", "different layout"));
        }
        ws.q.clone_from(w);
    }
    let report = ws.solve(rhs_blocks, rhs_full, tol, max_iter)?;
    Ok((ws.q, report))
}

/// Default iteration cap: twice the number of scalar unknowns.
pub fn default_max_iter(pattern: &SupportPattern, dim: usize) -> usize {
    (2 * dim * pattern.total_len()).max(1)
}

/// `P_k(full)` for every atom; convenience for building right-hand sides.
pub fn gather_blocks(full: &DenseMatrix, pattern: &Arc<SupportPattern>) -> Result<BlockSet> {
    let blocks = (0..pattern.atoms())
        .map(|k| gather(full, k, pattern))
        .collect::<Result<Vec<_>>>()?;
    BlockSet::from_blocks(pattern.clone(), full.nrows(), blocks)
}
