//! Sparsity patterns and the per-atom compression operators.
//!
//! `gather` keeps the columns of a full `M x N` matrix that atom `k` touches;
//! `scatter_add` is its adjoint and adds a compressed block back into those
//! columns. The stacked linear maps built from these are never formed
//! explicitly.

use std::sync::Arc;

use crate::error::{Result, RomdError};
use crate::linalg::DenseMatrix;

/// Per-atom sorted sample indices `rows[k]`, all in `[0, samples)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    samples: usize,
    rows: Vec<Vec<usize>>,
}

impl SupportPattern {
    pub fn new(samples: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (k, r) in rows.iter().enumerate() {
            if r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(RomdError::InvalidConfig(format!(
                    "support of atom {k} is not strictly increasing"
                )));
            }
            if let Some(&last) = r.last() {
                if last >= samples {
                    return Err(RomdError::InvalidConfig(format!(
                        "support of atom {k} references sample {last} >= {samples}"
                    )));
                }
            }
        }
        Ok(Self { samples, rows })
    }

    /// Nonzero pattern of the rows of `x`: `|x[k, n]| > zero_tol`.
    pub fn from_coeffs(x: &DenseMatrix, zero_tol: f64) -> Self {
        let rows = (0..x.nrows())
            .map(|k| (0..x.ncols()).filter(|&n| x[(k, n)].abs() > zero_tol).collect())
            .collect();
        Self { samples: x.ncols(), rows }
    }

    pub fn atoms(&self) -> usize {
        self.rows.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn row(&self, k: usize) -> &[usize] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len_of(&self, k: usize) -> usize {
        self.rows[k].len()
    }

    pub fn total_len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// How many atoms use each sample.
    pub fn column_multiplicity(&self) -> Vec<usize> {
        let mut mult = vec![0; self.samples];
        for r in &self.rows {
            for &n in r {
                mult[n] += 1;
            }
        }
        mult
    }

    fn check_atom(&self, k: usize) -> Result<()> {
        if k >= self.atoms() {
            return Err(RomdError::AtomOutOfRange { k, atoms: self.atoms() });
        }
        Ok(())
    }
}

/// `Ω_k` for every row of `x`. Rows with no entry above `zero_tol` get an
/// empty support.
pub fn supports_from_coeffs(x: &DenseMatrix, zero_tol: f64) -> SupportPattern {
    SupportPattern::from_coeffs(x, zero_tol)
}

/// Columns `Ω_k` of `a`, in order.
pub fn gather(a: &DenseMatrix, k: usize, pattern: &SupportPattern) -> Result<DenseMatrix> {
    pattern.check_atom(k)?;
    if a.ncols() != pattern.samples() {
        return Err(RomdError::shape("gather", pattern.samples(), a.ncols()));
    }
    let idx = pattern.row(k);
    let mut out = DenseMatrix::zeros(a.nrows(), idx.len());
    for (j, &n) in idx.iter().enumerate() {
        out.set_column(j, &a.column(n));
    }
    Ok(out)
}

/// `target[:, Ω_k] += block`.
pub fn scatter_add(
    target: &mut DenseMatrix,
    block: &DenseMatrix,
    k: usize,
    pattern: &SupportPattern,
) -> Result<()> {
    pattern.check_atom(k)?;
    let idx = pattern.row(k);
    if target.ncols() != pattern.samples() || block.ncols() != idx.len() || block.nrows() != target.nrows() {
        return Err(RomdError::shape(
            "scatter_add",
            format!("{}x{} block into {}x{}", target.nrows(), idx.len(), target.nrows(), pattern.samples()),
            format!("{}x{} block into {}x{}", block.nrows(), block.ncols(), target.nrows(), target.ncols()),
        ));
    }
    for (j, &n) in idx.iter().enumerate() {
        let mut dst = target.column_mut(n);
        dst += block.column(j);
    }
    Ok(())
}

/// One matrix per atom, block `k` sized `M x |Ω_k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pattern: Arc<SupportPattern>,
    dim: usize,
    blocks: Vec<DenseMatrix>,
}

impl BlockSet {
    pub fn zeros(pattern: Arc<SupportPattern>, dim: usize) -> Self {
        let blocks = pattern.rows().iter().map(|r| DenseMatrix::zeros(dim, r.len())).collect();
        Self { pattern, dim, blocks }
    }

    pub fn from_blocks(pattern: Arc<SupportPattern>, dim: usize, blocks: Vec<DenseMatrix>) -> Result<Self> {
        if blocks.len() != pattern.atoms() {
            return Err(RomdError::shape("BlockSet", pattern.atoms(), blocks.len()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != dim || b.ncols() != pattern.len_of(k) {
                return Err(RomdError::shape(
                    "BlockSet",
                    format!("{dim}x{} for atom {k}", pattern.len_of(k)),
                    format!("{}x{}", b.nrows(), b.ncols()),
                ));
            }
        }
        Ok(Self { pattern, dim, blocks })
    }

    /// `gather(a, k)` for every atom.
    pub fn gather_all(a: &DenseMatrix, pattern: Arc<SupportPattern>) -> Result<Self> {
        let blocks = (0..pattern.atoms())
            .map(|k| gather(a, k, &pattern))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: a.nrows(), pattern, blocks })
    }

    /// `Q_k = D[:, k] X[k, Ω_k]`, the rank-one pieces of `D X`.
    pub fn from_factors(d: &DenseMatrix, x: &DenseMatrix, pattern: Arc<SupportPattern>) -> Result<Self> {
        if d.ncols() != pattern.atoms() || x.nrows() != pattern.atoms() || x.ncols() != pattern.samples() {
            return Err(RomdError::shape(
                "BlockSet::from_factors",
                format!("D with {} cols, X {}x{}", pattern.atoms(), pattern.atoms(), pattern.samples()),
                format!("D with {} cols, X {}x{}", d.ncols(), x.nrows(), x.ncols()),
            ));
        }
        let blocks = (0..pattern.atoms())
            .map(|k| {
                let idx = pattern.row(k);
                DenseMatrix::from_fn(d.nrows(), idx.len(), |i, j| d[(i, k)] * x[(k, idx[j])])
            })
            .collect();
        Ok(Self { dim: d.nrows(), pattern, blocks })
    }

    pub fn pattern(&self) -> &Arc<SupportPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> &DenseMatrix {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DenseMatrix {
        &mut self.blocks[k]
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<DenseMatrix> {
        self.blocks
    }

    pub fn same_layout(&self, other: &BlockSet) -> bool {
        self.dim == other.dim && (Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern)
    }

    pub fn dot(&self, other: &BlockSet) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &BlockSet) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += alpha * y;
            }
        }
    }

    /// `self = other + beta * self`
    pub fn xpby(&mut self, other: &BlockSet, beta: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x = y + beta * *x;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for b in &mut self.blocks {
            b.scale_mut(alpha);
        }
    }

    pub fn add(&self, other: &BlockSet) -> BlockSet {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &BlockSet) -> BlockSet {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// `sum_k P_k^*(Q_k)`: every block scattered into a single `M x N` matrix.
pub fn sum_scatter(q: &BlockSet) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(q.dim(), q.pattern().samples());
    sum_scatter_into(q, &mut out);
    out
}

/// Overwrites `out` with `sum_scatter(q)`.
pub(crate) fn sum_scatter_into(q: &BlockSet, out: &mut DenseMatrix) {
    out.fill(0.0);
    let pattern = q.pattern();
    for (k, b) in q.blocks().iter().enumerate() {
        for (j, &n) in pattern.row(k).iter().enumerate() {
            let mut dst = out.column_mut(n);
            dst += b.column(j);
        }
    }
}
