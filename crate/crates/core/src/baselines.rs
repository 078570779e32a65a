//! MOD and K-SVD dictionary updates.

use log::debug;
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, RomdError};
use crate::linalg::{lstsq, normalize_columns, svd, DenseMatrix};
use crate::support::SupportPattern;
use crate::synth::random_dictionary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum BaselineKind {
    Mod,
    Ksvd,
}

#[derive(Debug, Clone)]
pub struct ModOutcome {
    pub dictionary: DenseMatrix,
    /// Input coefficients with row `k` multiplied by the norm removed from atom `k`.
    pub coeffs: DenseMatrix,
    pub reinitialized: Vec<usize>,
}

/// `argmin_D ||Y - D X||_F` (minimum-norm), before any normalization.
pub fn mod_least_squares(y: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if y.ncols() != x.ncols() {
        return Err(RomdError::shape("mod_update", format!("X with {} columns", y.ncols()), x.ncols()));
    }
    // X^T D^T = Y^T
    Ok(lstsq(&x.transpose(), &y.transpose())?.transpose())
}

/// MOD step: least-squares dictionary, unit columns, rows of `X` rescaled so
/// `D X` is unchanged. Atoms whose coefficient row is all zero are redrawn as
/// random unit vectors.
pub fn mod_update<R: Rng + ?Sized>(y: &DenseMatrix, x: &DenseMatrix, rng: &mut R) -> Result<ModOutcome> {
    let mut d = mod_least_squares(y, x)?;
    let mut coeffs = x.clone();
    let mut reinitialized = Vec::new();
    for k in 0..d.ncols() {
        let unused = x.row(k).iter().all(|v| *v == 0.0);
        if unused || d.column(k).norm() == 0.0 {
            let fresh = random_dictionary(d.nrows(), 1, rng);
            d.set_column(k, &fresh.column(0));
            coeffs.row_mut(k).fill(0.0);
            reinitialized.push(k);
        }
    }
    if !reinitialized.is_empty() {
        debug!("mod_update: redrew unused atoms {reinitialized:?}");
    }
    let (d, scales) = normalize_columns(&d)?;
    for (k, s) in scales.iter().enumerate() {
        coeffs.row_mut(k).scale_mut(*s);
    }
    Ok(ModOutcome { dictionary: d, coeffs, reinitialized })
}

#[derive(Debug, Clone)]
pub struct KsvdOutcome {
    pub dictionary: DenseMatrix,
    pub coeffs: DenseMatrix,
    /// Atoms with empty support that were replaced by a data column.
    pub replaced: Vec<usize>,
    /// `||Y - D X||_F` before the sweep and after each atom step.
    pub objective_trace: Vec<f64>,
}

/// One K-SVD sweep over the atoms in ascending order with supports fixed.
pub fn ksvd_update(y: &DenseMatrix, d: &DenseMatrix, x: &DenseMatrix) -> Result<KsvdOutcome> {
    let (m, k_atoms) = d.shape();
    if y.nrows() != m || x.nrows() != k_atoms || x.ncols() != y.ncols() {
        return Err(RomdError::shape(
            "ksvd_update",
            format!("Y {m}xN, X {k_atoms}xN"),
            format!("Y {}x{}, X {}x{}", y.nrows(), y.ncols(), x.nrows(), x.ncols()),
        ));
    }
    let mut d = d.clone();
    let mut x = x.clone();
    let mut resid = y - &d * &x;
    let mut trace = vec![resid.norm()];
    let mut replaced = Vec::new();
    let mut used_cols: Vec<usize> = Vec::new();

    for k in 0..k_atoms {
        let omega: Vec<usize> = (0..x.ncols()).filter(|&n| x[(k, n)] != 0.0).collect();
        if omega.is_empty() {
            // worst-represented sample that has not already seeded an atom
            let pick = (0..resid.ncols())
                .filter(|n| !used_cols.contains(n))
                .map(|n| (n, resid.column(n).norm()))
                .fold(None, |best: Option<(usize, f64)>, (n, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((n, v)),
                });
            if let Some((n, nrm)) = pick {
                if nrm > 0.0 {
                    d.set_column(k, &(resid.column(n) / nrm));
                    used_cols.push(n);
                    replaced.push(k);
                }
            }
            trace.push(resid.norm());
            continue;
        }
        let dk = d.column(k).into_owned();
        let mut e = DenseMatrix::zeros(m, omega.len());
        for (j, &n) in omega.iter().enumerate() {
            let mut col = resid.column(n).into_owned();
            col.axpy(x[(k, n)], &dk, 1.0);
            e.set_column(j, &col);
        }
        let f = svd(&e)?;
        let u1 = f.u.column(0).into_owned();
        let s1 = f.singulars[0];
        if s1 > 0.0 {
            d.set_column(k, &u1);
            for (j, &n) in omega.iter().enumerate() {
                let xv = s1 * f.vt[(0, j)];
                x[(k, n)] = xv;
                let new_col = e.column(j) - &u1 * xv;
                resid.set_column(n, &new_col);
            }
        }
        trace.push(resid.norm());
    }
    if !replaced.is_empty() {
        debug!("ksvd_update: replaced unused atoms {replaced:?}");
    }
    Ok(KsvdOutcome { dictionary: d, coeffs: x, replaced, objective_trace: trace })
}

/// Per-column least squares of `Y` on the atoms allowed by `pattern`; zero
/// elsewhere.
pub fn coeffs_on_support(y: &DenseMatrix, d: &DenseMatrix, pattern: &SupportPattern) -> Result<DenseMatrix> {
    let (k_atoms, n) = (d.ncols(), y.ncols());
    if pattern.atoms() != k_atoms || pattern.samples() != n {
        return Err(RomdError::shape("coeffs_on_support", format!("{k_atoms}x{n} pattern"), format!("{}x{}", pattern.atoms(), pattern.samples())));
    }
    let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in 0..k_atoms {
        for &c in pattern.row(k) {
            by_col[c].push(k);
        }
    }
    let cols = by_col
        .par_iter()
        .enumerate()
        .map(|(c, atoms)| {
            if atoms.is_empty() {
                return Ok(DVector::zeros(0));
            }
            let sub = d.select_columns(atoms.iter());
            let sol = lstsq(&sub, &DenseMatrix::from_column_slice(y.nrows(), 1, y.column(c).as_slice()))?;
            Ok(sol.column(0).into_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x = DenseMatrix::zeros(k_atoms, n);
    for (c, (atoms, v)) in by_col.iter().zip(cols).enumerate() {
        for (i, &k) in atoms.iter().enumerate() {
            x[(k, c)] = v[i];
        }
    }
    Ok(x)
}
