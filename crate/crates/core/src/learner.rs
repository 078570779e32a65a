//! Alternating dictionary learning: OMP sparse coding, then a dictionary
//! update on the resulting support, repeated for a fixed budget.

use std::sync::Arc;
use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{ksvd_update, mod_update, BaselineKind};
use crate::error::{Result, RomdError};
use crate::linalg::{normalize_columns, DenseMatrix};
use crate::metrics::{fit_residual, recovery_error};
use crate::omp::{omp_encode, OmpConfig};
use crate::romd::{romd_dict_update, AdmmConfig};
use crate::support::{supports_from_coeffs, BlockSet};
use crate::synth::{random_dictionary, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Engine {
    Romd,
    Baseline(BaselineKind),
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Romd, Engine::Baseline(BaselineKind::Ksvd), Engine::Baseline(BaselineKind::Mod)];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Romd => "romd",
            Engine::Baseline(BaselineKind::Ksvd) => "ksvd",
            Engine::Baseline(BaselineKind::Mod) => "mod",
        }
    }

    pub fn parse(s: &str) -> Option<Engine> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "romd" => Some(Engine::Romd),
            "ksvd" => Some(Engine::Baseline(BaselineKind::Ksvd)),
            "mod" => Some(Engine::Baseline(BaselineKind::Mod)),
            _ => None,
        }
    }
}

impl From<Engine> for String {
    fn from(e: Engine) -> String {
        e.name().to_string()
    }
}

impl TryFrom<String> for Engine {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        Engine::parse(&s).ok_or_else(|| format!("unknown engine {s:?}"))
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitPolicy {
    RandomUnit,
    DataColumns,
}

/// Optional early stop: quit once the recovery error moved less than
/// `tol` over the last `window` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub tol: f64,
    pub window: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self { tol: 1e-8, window: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub engine: Engine,
    pub max_outer_iter: usize,
    pub omp: OmpConfig,
    pub admm: AdmmConfig,
    pub init_policy: InitPolicy,
    pub eval_every: usize,
    pub plateau: Option<Plateau>,
    /// Seeds the MOD atom redraws.
    pub seed: u64,
}

impl LearnConfig {
    pub fn new(engine: Engine, sparsity: usize, max_outer_iter: usize) -> Self {
        Self {
            engine,
            max_outer_iter,
            omp: OmpConfig::new(sparsity),
            admm: AdmmConfig::default(),
            init_policy: InitPolicy::DataColumns,
            eval_every: 1,
            plateau: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iter == 0 {
            return Err(RomdError::InvalidConfig("max_outer_iter must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(RomdError::InvalidConfig("eval_every must be at least 1".into()));
        }
        self.admm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub recovery_error: Option<f64>,
    pub fit_residual: f64,
    pub admm_iters: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct LearnTrace {
    pub records: Vec<IterRecord>,
    pub dictionary: DenseMatrix,
    pub coeffs: DenseMatrix,
    /// Iteration and message of the update that failed, if any.
    pub failure: Option<(usize, String)>,
}

impl LearnTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.recovery_error)
    }

    pub fn error_at(&self, iteration: usize) -> Option<f64> {
        self.records.iter().find(|r| r.iteration == iteration).and_then(|r| r.recovery_error)
    }
}

/// Starting dictionary. `DataColumns` picks `k` distinct nonzero columns of
/// `y` uniformly at random.
pub fn initial_dictionary<R: Rng + ?Sized>(y: &DenseMatrix, k: usize, policy: InitPolicy, rng: &mut R) -> Result<DenseMatrix> {
    match policy {
        InitPolicy::RandomUnit => Ok(random_dictionary(y.nrows(), k, rng)),
        InitPolicy::DataColumns => {
            let mut candidates: Vec<usize> = (0..y.ncols()).filter(|&n| y.column(n).norm() > 0.0).collect();
            if candidates.len() < k {
                return Err(RomdError::InvalidConfig(format!(
                    "need {k} nonzero data columns to initialize, found {}",
                    candidates.len()
                )));
            }
            for i in 0..k {
                let j = rng.random_range(i..candidates.len());
                candidates.swap(i, j);
            }
            let d = y.select_columns(candidates[..k].iter());
            Ok(normalize_columns(&d)?.0)
        }
    }
}

/// Run the alternating loop from `d0`. When `truth` is given the recovery
/// error is recorded every `eval_every` iterations and at the last one.
pub fn learn(y: &DenseMatrix, d0: &DenseMatrix, cfg: &LearnConfig, truth: Option<&DenseMatrix>) -> Result<LearnTrace> {
    cfg.validate()?;
    if d0.nrows() != y.nrows() {
        return Err(RomdError::shape("learn", format!("D0 with {} rows", y.nrows()), d0.nrows()));
    }
    if let Some(t) = truth {
        if t.shape() != d0.shape() {
            return Err(RomdError::shape("learn", "truth shaped like D0", format!("{}x{}", t.nrows(), t.ncols())));
        }
    }
    let (mut d, _) = normalize_columns(d0)?;
    let mut x = DenseMatrix::zeros(d.ncols(), y.ncols());
    let mut rng = rng_from_seed(cfg.seed);
    let mut records = Vec::with_capacity(cfg.max_outer_iter);
    let mut failure = None;

    for it in 1..=cfg.max_outer_iter {
        let t0 = Instant::now();
        let prev_x = (it > 1).then_some(&x);
        let step = learn_step(y, &d, prev_x, cfg, it, &mut rng);
        let (d_new, x_new, admm_iters) = match step {
            Ok(v) => v,
            Err(e) => {
                warn!("{} update failed at iteration {it}: {e}", cfg.engine);
                failure = Some((it, e.to_string()));
                break;
            }
        };
        d = d_new;
        x = x_new;
        let recovery = match truth {
            Some(t) if it % cfg.eval_every == 0 || it == cfg.max_outer_iter => Some(recovery_error(&d, t, true)?.error),
            _ => None,
        };
        records.push(IterRecord {
            iteration: it,
            recovery_error: recovery,
            fit_residual: fit_residual(y, &d, &x),
            admm_iters,
            wall_time_secs: t0.elapsed().as_secs_f64(),
        });
        if let Some(pl) = cfg.plateau {
            if plateaued(&records, pl) {
                break;
            }
        }
    }
    Ok(LearnTrace { records, dictionary: d, coeffs: x, failure })
}

fn learn_step<R: Rng + ?Sized>(
    y: &DenseMatrix,
    d: &DenseMatrix,
    prev_x: Option<&DenseMatrix>,
    cfg: &LearnConfig,
    it: usize,
    rng: &mut R,
) -> Result<(DenseMatrix, DenseMatrix, usize)> {
    let x = omp_encode(y, d, &cfg.omp)?;
    match cfg.engine {
        Engine::Romd => {
            let pattern = Arc::new(supports_from_coeffs(&x, 0.0));
            // previous D X restricted to the new supports
            let warm = BlockSet::from_factors(d, prev_x.unwrap_or(&x), pattern.clone())?;
            let admm = AdmmConfig { fallback_seed: cfg.seed ^ it as u64, ..cfg.admm.clone() };
            let res = romd_dict_update(y, pattern, &admm, Some(&warm), Some(d))?;
            Ok((res.dictionary, res.coeffs, res.admm_iters))
        }
        Engine::Baseline(BaselineKind::Mod) => {
            let out = mod_update(y, &x, rng)?;
            Ok((out.dictionary, out.coeffs, 0))
        }
        Engine::Baseline(BaselineKind::Ksvd) => {
            let out = ksvd_update(y, d, &x)?;
            Ok((out.dictionary, out.coeffs, 0))
        }
    }
}

fn plateaued(records: &[IterRecord], pl: Plateau) -> bool {
    let errs: Vec<f64> = records.iter().filter_map(|r| r.recovery_error).collect();
    if errs.len() <= pl.window {
        return false;
    }
    let tail = &errs[errs.len() - pl.window - 1..];
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo < pl.tol
}
