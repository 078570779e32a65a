//! Whole-dictionary update by nuclear-norm minimization over rank-one blocks.
//!
//! Given the observations `Y` and a fixed sparsity pattern, each atom `k`
//! owns a block `Q_k` (`M x |Ω_k|`) that should equal `d_k x_k[Ω_k]`. The
//! update solves
//!
//! ```text
//! minimize  sum_k ||Q_k||_*   subject to  sum_k P_k^*(Q_k) = Y
//! ```
//!
//! (or `||sum_k P_k^*(Q_k) - Y||_F <= eps` in noisy mode) with scaled ADMM
//! over the splitting `Z_k = Q_k`, then reads each atom and its coefficient
//! row off the leading singular triple of `Q_k`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cg::{default_max_iter, CgWorkspace};
use crate::error::{Result, RomdError};
use crate::linalg::{svd, DenseMatrix};
use crate::support::{sum_scatter, BlockSet, SupportPattern};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdmmConfig {
    /// Penalty parameter; the singular-value threshold is `1 / rho`.
    pub rho: f64,
    /// Relative primal tolerance for stopping.
    pub stop_tol: f64,
    pub max_admm_iter: usize,
    pub cg_tol: f64,
    /// `None` uses twice the number of scalar unknowns.
    pub cg_max_iter: Option<usize>,
    /// Radius of the Frobenius ball around `Y`; zero selects the exact-fit mode.
    pub noise_radius: f64,
    /// Seed for replacement atoms when an atom has no support and no previous value.
    pub fallback_seed: u64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 0.8,
            stop_tol: 1e-5,
            max_admm_iter: 300,
            cg_tol: 1e-10,
            cg_max_iter: None,
            noise_radius: 0.0,
            fallback_seed: 0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(RomdError::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.stop_tol > 0.0) {
            return Err(RomdError::InvalidConfig(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        if !(self.noise_radius >= 0.0 && self.noise_radius.is_finite()) {
            return Err(RomdError::InvalidConfig(format!(
                "noise_radius must be finite and non-negative, got {}",
                self.noise_radius
            )));
        }
        if !(self.cg_tol > 0.0) {
            return Err(RomdError::InvalidConfig("cg_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_radius > 0.0
    }
}

/// All ADMM iterates for one dictionary update.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub q: BlockSet,
    pub z: BlockSet,
    pub lambda_k: BlockSet,
    pub lambda0: DenseMatrix,
    /// Only present in noisy mode.
    pub w: Option<DenseMatrix>,
    pub iter: usize,
    /// `||sum_k P_k^*(Q_k) - Y||_F / ||Y||_F`
    pub fit_residual: f64,
    /// `||Q - Z||_F / ||Y||_F`
    pub consensus_residual: f64,
    /// `rho ||Z^{l+1} - Z^l||_F`, reported only.
    pub dual_residual: f64,
}

impl AdmmState {
    /// Zero duals and `Q`; `Z` from `init` or from `Y` split evenly across the
    /// atoms sharing each column.
    pub fn new(y: &DenseMatrix, pattern: Arc<SupportPattern>, init: Option<&BlockSet>, noisy: bool) -> Result<Self> {
        let m = y.nrows();
        if y.ncols() != pattern.samples() {
            return Err(RomdError::shape("AdmmState::new", pattern.samples(), y.ncols()));
        }
        let z = match init {
            Some(b) => {
                if b.dim() != m || b.pattern().as_ref() != pattern.as_ref() {
                    return Err(RomdError::shape("AdmmState::new", "init blocks on the same pattern", "different layout"));
                }
                BlockSet::from_blocks(pattern.clone(), m, b.blocks().to_vec())?
            }
            None => {
                let mult = pattern.column_multiplicity();
                let mut split = y.clone();
                for (n, &c) in mult.iter().enumerate() {
                    if c > 1 {
                        split.column_mut(n).unscale_mut(c as f64);
                    }
                }
                BlockSet::gather_all(&split, pattern.clone())?
            }
        };
        let zeros = BlockSet::zeros(pattern.clone(), m);
        Ok(Self {
            q: zeros.clone(),
            z,
            lambda_k: zeros,
            lambda0: DenseMatrix::zeros(m, pattern.samples()),
            w: noisy.then(|| y.clone()),
            iter: 0,
            fit_residual: f64::INFINITY,
            consensus_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
        })
    }
}

/// Singular-value soft-thresholding: the prox of `tau ||.||_*`.
pub fn svt(a: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return Ok(a.clone());
    }
    let f = svd(a)?;
    let keep = f.singulars.iter().take_while(|&&s| s > tau).count();
    let mut out = DenseMatrix::zeros(a.nrows(), a.ncols());
    for m in 0..keep {
        let shrunk = f.singulars[m] - tau;
        out.ger(shrunk, &f.u.column(m), &f.vt.row(m).transpose(), 1.0);
    }
    Ok(out)
}

/// `Z_k = svt(Q_k + Λ_k, 1/rho)` for every atom.
pub fn z_update(q: &BlockSet, lambda_k: &BlockSet, rho: f64) -> Result<BlockSet> {
    if !(rho > 0.0) {
        return Err(RomdError::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    let tau = 1.0 / rho;
    let blocks = q
        .blocks()
        .par_iter()
        .zip(lambda_k.blocks().par_iter())
        .enumerate()
        .map(|(k, (qk, lk))| {
            svt(&(qk + lk), tau).map_err(|e| RomdError::AtomSvd { atom: k, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    BlockSet::from_blocks(q.pattern().clone(), q.dim(), blocks)
}

/// Scaled dual ascent. `target` is `Y` in exact mode and the fresh `W` in
/// noisy mode.
pub fn dual_update(state: &mut AdmmState, target: &DenseMatrix) {
    state.lambda_k.axpy(1.0, &state.q);
    state.lambda_k.axpy(-1.0, &state.z);
    let fit = sum_scatter(&state.q);
    state.lambda0 += fit - target;
}

/// Projection of `sum_k P_k^*(Q_k) + Λ_0` onto `{W : ||W - Y||_F <= eps}`.
pub fn w_update(q: &BlockSet, lambda0: &DenseMatrix, y: &DenseMatrix, eps: f64) -> DenseMatrix {
    let w_hat = sum_scatter(q) + lambda0;
    project_ball(&w_hat, y, eps)
}

pub(crate) fn project_ball(w_hat: &DenseMatrix, center: &DenseMatrix, eps: f64) -> DenseMatrix {
    let diff = w_hat - center;
    let dist = diff.norm();
    if dist <= eps {
        w_hat.clone()
    } else {
        center + diff * (eps / dist)
    }
}

/// Leading singular pair of a block: `(u_1, s_1 v_1)`.
pub fn extract_rank_one(q: &DenseMatrix) -> Result<(DVector<f64>, DVector<f64>)> {
    if q.ncols() == 0 || q.nrows() == 0 {
        return Err(RomdError::ZeroBlock);
    }
    let f = svd(q)?;
    let s1 = f.singulars[0];
    if s1 == 0.0 {
        return Err(RomdError::ZeroBlock);
    }
    let atom = f.u.column(0).into_owned();
    let coeffs = f.vt.row(0).transpose() * s1;
    Ok((atom, coeffs))
}

#[derive(Debug, Clone)]
pub struct DictUpdateResult {
    pub dictionary: DenseMatrix,
    pub coeffs: DenseMatrix,
    /// Final `Q` blocks the factors were read from.
    pub blocks: BlockSet,
    pub admm_iters: usize,
    pub converged: bool,
    pub fit_residual: f64,
    /// Fit residual after every ADMM iteration.
    pub fit_history: Vec<f64>,
    pub cg_iters: usize,
    /// Atoms that had no usable block and kept their previous value.
    pub idle_atoms: Vec<usize>,
}

/// Run ADMM on the block problem and extract `(D, X)`.
///
/// `init` seeds `Z` (typically the previous `D X` restricted to the new
/// supports). `previous` supplies the atoms kept for empty supports.
pub fn romd_dict_update(
    y: &DenseMatrix,
    pattern: Arc<SupportPattern>,
    cfg: &AdmmConfig,
    init: Option<&BlockSet>,
    previous: Option<&DenseMatrix>,
) -> Result<DictUpdateResult> {
    cfg.validate()?;
    let (m, n) = y.shape();
    let k_atoms = pattern.atoms();
    if n != pattern.samples() {
        return Err(RomdError::shape("romd_dict_update", format!("Y with {} columns", pattern.samples()), n));
    }
    if let Some(p) = previous {
        if p.shape() != (m, k_atoms) {
            return Err(RomdError::shape("romd_dict_update", format!("{m}x{k_atoms}"), format!("{}x{}", p.nrows(), p.ncols())));
        }
    }
    let noisy = cfg.is_noisy();
    let y_norm = y.norm().max(f64::MIN_POSITIVE);
    let mut state = AdmmState::new(y, pattern.clone(), init, noisy)?;
    let mut ws = CgWorkspace::new(pattern.clone(), m);
    let cg_max = cfg.cg_max_iter.unwrap_or_else(|| default_max_iter(&pattern, m));

    let mut fit_history = Vec::new();
    let mut best: Option<(f64, BlockSet, f64)> = None;
    let mut converged = false;
    let mut cg_iters = 0;

    for iter in 1..=cfg.max_admm_iter {
        // Q-step: B_k = Z_k - Λ_k, B_0 = (Y or W) - Λ_0
        let rhs_blocks = state.z.sub(&state.lambda_k);
        let target = state.w.as_ref().unwrap_or(y);
        let rhs_full = target - &state.lambda0;
        ws.q.clone_from(&state.q);
        let rep = ws.solve(&rhs_blocks, &rhs_full, cfg.cg_tol, cg_max).map_err(|e| match e {
            RomdError::CgNonFinite { .. } => RomdError::AdmmNonFinite { iteration: iter },
            other => other,
        })?;
        cg_iters += rep.iterations;
        state.q.clone_from(&ws.q);

        let z_new = z_update(&state.q, &state.lambda_k, cfg.rho)?;
        state.dual_residual = cfg.rho * z_new.sub(&state.z).norm();
        state.z = z_new;

        if noisy {
            state.w = Some(w_update(&state.q, &state.lambda0, y, cfg.noise_radius));
        }
        let target = state.w.clone().unwrap_or_else(|| y.clone());
        dual_update(&mut state, &target);

        let fit = sum_scatter(&state.q);
        state.iter = iter;
        state.fit_residual = (&fit - y).norm() / y_norm;
        state.consensus_residual = state.q.sub(&state.z).norm() / y_norm;
        if !state.fit_residual.is_finite() || !state.consensus_residual.is_finite() || !state.lambda0.iter().all(|v| v.is_finite()) {
            return Err(RomdError::AdmmNonFinite { iteration: iter });
        }
        fit_history.push(state.fit_residual);

        // exact mode: fit to Y; noisy mode: fit to the projected W
        let feas = if noisy { (&fit - &target).norm() / y_norm } else { state.fit_residual };
        let primal = feas.max(state.consensus_residual);
        if best.as_ref().is_none_or(|(b, _, _)| primal < *b) {
            best = Some((primal, state.q.clone(), state.fit_residual));
        }
        if primal <= cfg.stop_tol {
            converged = true;
            break;
        }
    }

    let (q_final, fit_final) = if converged {
        (state.q.clone(), state.fit_residual)
    } else {
        match best {
            Some((_, q, f)) => (q, f),
            None => (state.q.clone(), state.fit_residual),
        }
    };

    let (dictionary, coeffs, idle_atoms) = extract_factors(&q_final, previous, cfg.fallback_seed)?;
    Ok(DictUpdateResult {
        dictionary,
        coeffs,
        blocks: q_final,
        admm_iters: state.iter,
        converged,
        fit_residual: fit_final,
        fit_history,
        cg_iters,
        idle_atoms,
    })
}

/// Rank-one factors of every block. Atoms with an empty or zero block keep
/// `previous[:, k]` (or a seeded random unit vector) and a zero row.
pub fn extract_factors(
    q: &BlockSet,
    previous: Option<&DenseMatrix>,
    fallback_seed: u64,
) -> Result<(DenseMatrix, DenseMatrix, Vec<usize>)> {
    let pattern = q.pattern();
    let (m, k_atoms, n) = (q.dim(), pattern.atoms(), pattern.samples());
    let factors = q
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(k, b)| match extract_rank_one(b) {
            Ok(f) => Ok(Some(f)),
            Err(RomdError::ZeroBlock) => Ok(None),
            Err(e) => Err(RomdError::AtomSvd { atom: k, source: Box::new(e) }),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut d = DenseMatrix::zeros(m, k_atoms);
    let mut x = DenseMatrix::zeros(k_atoms, n);
    let mut idle = Vec::new();
    for (k, f) in factors.into_iter().enumerate() {
        match f {
            Some((atom, coeffs)) => {
                d.set_column(k, &atom);
                for (j, &col) in pattern.row(k).iter().enumerate() {
                    x[(k, col)] = coeffs[j];
                }
            }
            None => {
                idle.push(k);
                let atom = match previous {
                    Some(p) if p.column(k).norm() > 0.0 => p.column(k).normalize(),
                    _ => random_unit(m, fallback_seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                };
                d.set_column(k, &atom);
            }
        }
    }
    Ok((d, x, idle))
}

fn random_unit(m: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let v = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let nrm: f64 = v.norm();
        if nrm > 1e-8 {
            return v / nrm;
        }
    }
}

/// Blocks `d_k x_k[Ω_k]` restricted to a (possibly new) pattern; warm start
/// for the next update.
pub fn warm_start_blocks(d: &DenseMatrix, x: &DenseMatrix, pattern: Arc<SupportPattern>) -> Result<BlockSet> {
    BlockSet::from_factors(d, x, pattern)
}
