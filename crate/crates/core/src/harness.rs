//! Seeded, resumable experiment runner for the four benchmark families.
//!
//! Every trial is identified by its cell parameters, engine and index, and
//! draws all randomness from `derive_seed(base_seed, ..)` along that path.
//! Trials run in a rayon pool; results are sorted before writing so the CSV
//! does not depend on scheduling. Wall times only go to the JSON sidecar.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{coeffs_on_support, ksvd_update, mod_update, BaselineKind};
use crate::error::{Result, RomdError};
use crate::learner::{initial_dictionary, learn, Engine, InitPolicy, LearnConfig};
use crate::metrics::{fit_residual, recovery_error};
use crate::romd::{romd_dict_update, AdmmConfig};
use crate::support::SupportPattern;
use crate::synth::{add_noise, derive_seed, gen_instance, random_dictionary, rng_from_seed};

pub const DEFAULT_RHO: f64 = 0.8;
pub const DEFAULT_NOISY_RHO: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Phase,
    Curve,
    SweepN,
    Noisy,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Phase => "phase",
            Family::Curve => "curve",
            Family::SweepN => "sweep_n",
            Family::Noisy => "noisy",
        }
    }

    fn seed_group(&self) -> u64 {
        match self {
            Family::Phase => 1,
            Family::Curve => 2,
            Family::SweepN | Family::Noisy => 3,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Dictionary shape and sparsity of one grid axis entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub k: usize,
    pub s: usize,
}

/// One grid point. `snr_db` is `None` for noise-free families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub n: usize,
    pub snr_db: Option<f64>,
}

impl Cell {
    fn key(&self) -> (usize, usize, usize, usize, u64) {
        (self.m, self.k, self.s, self.n, self.snr_db.map_or(u64::MAX, f64::to_bits))
    }

    fn cmp_canonical(&self, other: &Cell) -> Ordering {
        (self.m, self.k, self.s, self.n)
            .cmp(&(other.m, other.k, other.s, other.n))
            .then_with(|| match (self.snr_db, other.snr_db) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(&b),
            })
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "M={} K={} S={} N={}", self.m, self.k, self.s, self.n)?;
        if let Some(snr) = self.snr_db {
            write!(f, " SNR={snr}dB")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub dims: Vec<Dims>,
    pub samples: Vec<usize>,
    /// Only read by the noisy family. `f64::INFINITY` means noise-free.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub engines: Vec<Engine>,
    /// `None` picks the family default.
    pub rho: Option<f64>,
    pub romd_iters: usize,
    pub baseline_iters: usize,
    pub max_admm_iter: usize,
    pub output: PathBuf,
}

impl ExperimentSpec {
    /// Desk-scale defaults: 10 trials and reduced grids.
    pub fn desk(family: Family, output: impl Into<PathBuf>) -> Self {
        let square = |m: usize, k: usize, s: usize| Dims { m, k, s };
        let (dims, samples, snr_db, romd_iters, baseline_iters) = match family {
            Family::Phase => (
                [1, 3, 5, 8, 10, 12].iter().map(|&s| square(16, 32, s)).collect(),
                [4, 8, 12, 16, 20].iter().map(|r| r * 16).collect(),
                vec![],
                1,
                50,
            ),
            Family::Curve => (vec![square(16, 32, 3)], vec![200], vec![], 150, 150),
            Family::SweepN => (vec![square(16, 32, 3)], vec![64, 128, 192, 256, 320], vec![], 50, 500),
            Family::Noisy => (vec![square(16, 32, 3)], vec![100, 200, 300, 400], vec![30.0, 20.0], 50, 500),
        };
        Self {
            family,
            dims,
            samples,
            snr_db,
            trials: 10,
            base_seed: 0,
            engines: Engine::ALL.to_vec(),
            rho: None,
            romd_iters,
            baseline_iters,
            max_admm_iter: AdmmConfig::default().max_admm_iter,
            output: output.into(),
        }
    }

    /// Full grids and 100 trials.
    pub fn full_scale(family: Family, output: impl Into<PathBuf>) -> Self {
        let mut spec = Self::desk(family, output);
        spec.trials = 100;
        match family {
            Family::Phase => {
                spec.dims = (1..=12).map(|s| Dims { m: 16, k: 32, s }).collect();
                spec.samples = (4..=20).map(|r| r * 16).collect();
            }
            Family::SweepN | Family::Noisy => {
                spec.dims = vec![Dims { m: 16, k: 32, s: 3 }, Dims { m: 24, k: 48, s: 6 }];
                spec.samples = (1..=10).map(|i| i * 40).collect();
            }
            Family::Curve => {}
        }
        spec
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(match self.family {
            Family::Noisy => DEFAULT_NOISY_RHO,
            _ => DEFAULT_RHO,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RomdError::InvalidConfig(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.dims.is_empty() || self.samples.is_empty() {
            return bad("grid is empty".into());
        }
        if self.family == Family::Noisy && self.snr_db.is_empty() {
            return bad("noisy family needs at least one SNR".into());
        }
        if self.engines.is_empty() {
            return bad("no engines selected".into());
        }
        for d in &self.dims {
            if d.m == 0 || d.k == 0 || d.s == 0 || d.s > d.m || d.s > d.k {
                return bad(format!("need 1 <= S <= min(M, K), got M={} K={} S={}", d.m, d.k, d.s));
            }
        }
        if self.samples.contains(&0) {
            return bad("sample counts must be positive".into());
        }
        if self.family == Family::Noisy && self.snr_db.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return bad("SNR must be a number or +inf".into());
        }
        if self.romd_iters == 0 || self.baseline_iters == 0 || self.max_admm_iter == 0 {
            return bad("iteration budgets must be at least 1".into());
        }
        let rho = self.rho();
        if !(rho > 0.0 && rho.is_finite()) {
            return bad(format!("rho must be positive, got {rho}"));
        }
        Ok(())
    }

    /// Grid cells in canonical order, duplicates removed with a warning.
    pub fn cells(&self) -> Vec<Cell> {
        let dims = dedup(&self.dims, "dims");
        let samples = dedup(&self.samples, "sample counts");
        let snrs: Vec<Option<f64>> = if self.family == Family::Noisy {
            let bits: Vec<u64> = self.snr_db.iter().map(|v| v.to_bits()).collect();
            dedup(&bits, "SNR values").into_iter().map(|b| Some(f64::from_bits(b))).collect()
        } else {
            vec![None]
        };
        let mut cells = Vec::new();
        for d in &dims {
            for &n in &samples {
                for &snr_db in &snrs {
                    cells.push(Cell { m: d.m, k: d.k, s: d.s, n, snr_db });
                }
            }
        }
        cells.sort_by(Cell::cmp_canonical);
        cells
    }

    fn engines(&self) -> Vec<Engine> {
        let mut seen = BTreeSet::new();
        self.engines.iter().copied().filter(|e| seen.insert(*e)).collect()
    }

    fn budget(&self, engine: Engine) -> usize {
        match engine {
            Engine::Romd => self.romd_iters,
            Engine::Baseline(_) => self.baseline_iters,
        }
    }
}

fn dedup<T: Ord + Clone + std::fmt::Debug>(items: &[T], what: &str) -> Vec<T> {
    let mut seen = BTreeSet::new();
    let out: Vec<T> = items.iter().filter(|v| seen.insert((*v).clone())).cloned().collect();
    if out.len() != items.len() {
        warn!("duplicate {what} in grid removed: {items:?} -> {out:?}");
    }
    out
}

/// One CSV line. `trial` is the trial index, or `mean` for aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: Family,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub n: usize,
    pub snr_db: Option<f64>,
    pub engine: String,
    pub trial: String,
    pub iteration: usize,
    pub error: Option<f64>,
    pub fit_residual: Option<f64>,
    pub inner_iters: Option<usize>,
    pub status: String,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

const MEAN: &str = "mean";
const OK: &str = "ok";

impl ResultRow {
    pub fn cell(&self) -> Cell {
        Cell { m: self.m, k: self.k, s: self.s, n: self.n, snr_db: self.snr_db }
    }

    pub fn is_mean(&self) -> bool {
        self.trial == MEAN
    }

    pub fn trial_index(&self) -> Option<usize> {
        self.trial.parse().ok()
    }

    pub fn is_ok(&self) -> bool {
        self.status == OK
    }

    fn engine_rank(&self) -> usize {
        Engine::parse(&self.engine).and_then(|e| Engine::ALL.iter().position(|x| *x == e)).unwrap_or(usize::MAX)
    }

    fn cmp_canonical(&self, other: &ResultRow) -> Ordering {
        self.cell()
            .cmp_canonical(&other.cell())
            .then(self.engine_rank().cmp(&other.engine_rank()))
            .then(self.engine.cmp(&other.engine))
            .then(self.is_mean().cmp(&other.is_mean()))
            .then(self.trial_index().cmp(&other.trial_index()))
            .then(self.iteration.cmp(&other.iteration))
    }
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub spec: ExperimentSpec,
    /// Trial rows followed by mean rows, in canonical order.
    pub rows: Vec<ResultRow>,
    /// Number of trials that failed in this run.
    pub failed_trials: usize,
    /// Number of `(cell, engine)` groups taken from an earlier run.
    pub resumed_groups: usize,
}

impl ResultTable {
    pub fn trial_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| !r.is_mean())
    }

    pub fn mean_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.is_mean())
    }

    /// Mean error of `engine` at `cell`, at `iteration` (the last one when `None`).
    pub fn mean_error(&self, cell: &Cell, engine: Engine, iteration: Option<usize>) -> Option<f64> {
        let rows: Vec<&ResultRow> = self
            .mean_rows()
            .filter(|r| r.cell().key() == cell.key() && r.engine == engine.name())
            .collect();
        let row = match iteration {
            Some(it) => rows.into_iter().find(|r| r.iteration == it),
            None => rows.into_iter().max_by_key(|r| r.iteration),
        };
        row.and_then(|r| r.error)
    }

    pub fn is_partial(&self) -> bool {
        self.trial_rows().any(|r| !r.is_ok())
    }
}

/// Run whatever family `spec` names.
pub fn run(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let started = Instant::now();
    let cells = spec.cells();
    let engines = spec.engines();

    let previous = if spec.output.exists() { read_rows(&spec.output)? } else { Vec::new() };
    let mut kept: Vec<ResultRow> = Vec::new();
    let mut done: BTreeSet<((usize, usize, usize, usize, u64), String)> = BTreeSet::new();
    for cell in &cells {
        for engine in &engines {
            let budget = spec.budget(*engine);
            let group: Vec<&ResultRow> = previous
                .iter()
                .filter(|r| r.family == spec.family && !r.is_mean() && r.cell().key() == cell.key() && r.engine == engine.name())
                .collect();
            if group_complete(&group, spec.trials, budget, spec.family) {
                done.insert((cell.key(), engine.name().to_string()));
                kept.extend(group.into_iter().cloned());
            }
        }
    }
    if !done.is_empty() {
        info!("{}: resuming, {} completed (cell, engine) groups skipped", spec.family, done.len());
    }

    let jobs: Vec<(Cell, Engine, usize)> = cells
        .iter()
        .flat_map(|c| engines.iter().flat_map(move |e| (0..spec.trials).map(move |t| (*c, *e, t))))
        .filter(|(c, e, _)| !done.contains(&(c.key(), e.name().to_string())))
        .collect();
    info!("{}: {} trials to run", spec.family, jobs.len());

    let fresh: Vec<Vec<ResultRow>> = jobs.par_iter().map(|(c, e, t)| run_trial(spec, c, *e, *t)).collect();
    let failed_trials = fresh.iter().filter(|rows| rows.iter().any(|r| !r.is_ok())).count();

    let mut rows: Vec<ResultRow> = kept.into_iter().chain(fresh.into_iter().flatten()).collect();
    rows.sort_by(ResultRow::cmp_canonical);
    let means = mean_rows(&rows);
    rows.extend(means);
    rows.sort_by(ResultRow::cmp_canonical);

    let table = ResultTable { spec: spec.clone(), rows, failed_trials, resumed_groups: done.len() };
    write_csv(&spec.output, &table.rows)?;
    write_sidecar(&table, started.elapsed().as_secs_f64())?;
    Ok(table)
}

fn expect_family(spec: &ExperimentSpec, family: Family) -> Result<()> {
    if spec.family != family {
        return Err(RomdError::InvalidConfig(format!("expected a {family} spec, got {}", spec.family)));
    }
    Ok(())
}

/// Dictionary-update-only runs on ground-truth supports over an (S, N) grid.
pub fn run_phase(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_family(spec, Family::Phase)?;
    run(spec)
}

/// Full learning traces, one row per outer iteration.
pub fn run_curve(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_family(spec, Family::Curve)?;
    run(spec)
}

/// Final learning error against the number of samples.
pub fn run_sweep_n(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_family(spec, Family::SweepN)?;
    run(spec)
}

/// As [`run_sweep_n`] on noisy data; ROMD uses the true noise norm as its radius.
pub fn run_noisy(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_family(spec, Family::Noisy)?;
    run(spec)
}

fn group_complete(group: &[&ResultRow], trials: usize, budget: usize, family: Family) -> bool {
    let expected_iter = match family {
        Family::Phase => None,
        _ => Some(budget),
    };
    (0..trials).all(|t| {
        let mine: Vec<&&ResultRow> = group.iter().filter(|r| r.trial_index() == Some(t)).collect();
        let last_ok = mine.iter().all(|r| r.is_ok()) && !mine.is_empty();
        let full = match (family, expected_iter) {
            (Family::Curve, Some(b)) => mine.len() == b,
            (_, Some(b)) => mine.len() == 1 && mine[0].iteration == b,
            _ => mine.len() == 1,
        };
        last_ok && full
    }) && group.iter().all(|r| r.trial_index().is_some_and(|t| t < trials))
}

/// Seed of one trial. Shared by all engines, and by all SNR levels of a
/// noisy cell (the noise direction is drawn once and rescaled), so noisy
/// trials are paired and `SNR = inf` reproduces the sweep over `N`.
pub fn trial_seed(base: u64, family: Family, cell: &Cell, trial: usize) -> u64 {
    derive_seed(base, &[family.seed_group(), cell.m as u64, cell.k as u64, cell.s as u64, cell.n as u64, trial as u64])
}

const SEED_INSTANCE: u64 = 0;
const SEED_NOISE: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_ENGINE: u64 = 3;

struct Sample {
    iteration: usize,
    error: f64,
    fit: f64,
    inner: usize,
}

fn run_trial(spec: &ExperimentSpec, cell: &Cell, engine: Engine, trial: usize) -> Vec<ResultRow> {
    let t0 = Instant::now();
    let seed = trial_seed(spec.base_seed, spec.family, cell, trial);
    let outcome = match spec.family {
        Family::Phase => phase_trial(spec, cell, engine, seed).map(|s| (vec![s], None)),
        _ => learning_trial(spec, cell, engine, seed),
    };
    let wall = t0.elapsed().as_secs_f64();
    let row = |iteration: usize, error: Option<f64>, fit: Option<f64>, inner: Option<usize>, status: String| ResultRow {
        family: spec.family,
        m: cell.m,
        k: cell.k,
        s: cell.s,
        n: cell.n,
        snr_db: cell.snr_db,
        engine: engine.name().to_string(),
        trial: trial.to_string(),
        iteration,
        error,
        fit_residual: fit,
        inner_iters: inner,
        status,
        wall_time_secs: wall,
    };
    match outcome {
        Ok((samples, failure)) => {
            let status = failure.map_or_else(|| OK.to_string(), |msg| format!("failed: {msg}"));
            if samples.is_empty() {
                return vec![row(0, None, None, None, status)];
            }
            samples
                .iter()
                .map(|s| row(s.iteration, Some(s.error), Some(s.fit), Some(s.inner), status.clone()))
                .collect()
        }
        Err(e) => {
            warn!("{} {cell} {engine} trial {trial} failed: {e}", spec.family);
            vec![row(0, None, None, None, format!("failed: {e}"))]
        }
    }
}

/// Supports fixed to the truth. ROMD runs one dictionary update; the
/// baselines alternate a support-restricted refit of `X` with their update,
/// starting from a random dictionary, for `baseline_iters` rounds.
fn phase_trial(spec: &ExperimentSpec, cell: &Cell, engine: Engine, seed: u64) -> Result<Sample> {
    let inst = gen_instance(cell.m, cell.k, cell.n, cell.s, derive_seed(seed, &[SEED_INSTANCE]))?;
    let pattern = SupportPattern::from_coeffs(&inst.x_true, 0.0);
    match engine {
        Engine::Romd => {
            let cfg = AdmmConfig { rho: spec.rho(), max_admm_iter: spec.max_admm_iter, ..AdmmConfig::default() };
            let res = romd_dict_update(&inst.y, Arc::new(pattern), &cfg, None, None)?;
            Ok(Sample {
                iteration: 1,
                error: recovery_error(&res.dictionary, &inst.d_true, true)?.error,
                fit: fit_residual(&inst.y, &res.dictionary, &res.coeffs),
                inner: res.admm_iters,
            })
        }
        Engine::Baseline(kind) => {
            let mut rng = rng_from_seed(derive_seed(seed, &[SEED_INIT]));
            let mut d = random_dictionary(cell.m, cell.k, &mut rng);
            let mut x = coeffs_on_support(&inst.y, &d, &pattern)?;
            let mut engine_rng = rng_from_seed(derive_seed(seed, &[SEED_ENGINE]));
            for _ in 0..spec.baseline_iters {
                d = match kind {
                    BaselineKind::Mod => mod_update(&inst.y, &x, &mut engine_rng)?.dictionary,
                    BaselineKind::Ksvd => ksvd_update(&inst.y, &d, &x)?.dictionary,
                };
                x = coeffs_on_support(&inst.y, &d, &pattern)?;
            }
            Ok(Sample {
                iteration: spec.baseline_iters,
                error: recovery_error(&d, &inst.d_true, true)?.error,
                fit: fit_residual(&inst.y, &d, &x),
                inner: 0,
            })
        }
    }
}

type LearningOutcome = (Vec<Sample>, Option<String>);

fn learning_trial(spec: &ExperimentSpec, cell: &Cell, engine: Engine, seed: u64) -> Result<LearningOutcome> {
    let clean = gen_instance(cell.m, cell.k, cell.n, cell.s, derive_seed(seed, &[SEED_INSTANCE]))?;
    let inst = match cell.snr_db {
        Some(snr) => add_noise(&clean, snr, derive_seed(seed, &[SEED_NOISE]))?,
        None => clean,
    };
    let mut rng = rng_from_seed(derive_seed(seed, &[SEED_INIT]));
    // too few samples for distinct data columns
    let policy = if cell.n >= cell.k { InitPolicy::DataColumns } else { InitPolicy::RandomUnit };
    let d0 = initial_dictionary(&inst.y, cell.k, policy, &mut rng)?;
    let mut cfg = LearnConfig::new(engine, cell.s, spec.budget(engine));
    cfg.seed = derive_seed(seed, &[SEED_ENGINE]);
    cfg.admm = AdmmConfig {
        rho: spec.rho(),
        max_admm_iter: spec.max_admm_iter,
        noise_radius: inst.noise_norm,
        ..AdmmConfig::default()
    };
    let trace = learn(&inst.y, &d0, &cfg, Some(&inst.d_true))?;
    let samples: Vec<Sample> = trace
        .records
        .iter()
        .filter_map(|r| {
            r.recovery_error.map(|error| Sample { iteration: r.iteration, error, fit: r.fit_residual, inner: r.admm_iters })
        })
        .collect();
    let samples = match spec.family {
        Family::Curve => samples,
        _ => samples.into_iter().last().into_iter().collect(),
    };
    Ok((samples, trace.failure.map(|(it, msg)| format!("iteration {it}: {msg}"))))
}

/// Arithmetic mean over successful trials per `(cell, engine, iteration)`.
fn mean_rows(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut groups: BTreeMap<(usize, usize, usize, usize, u64, String, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_mean()) {
        let c = r.cell().key();
        groups.entry((c.0, c.1, c.2, c.3, c.4, r.engine.clone(), r.iteration)).or_default().push(r);
    }
    let mut out = Vec::new();
    for group in groups.values() {
        let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.is_ok()).collect();
        let first = group[0];
        let mean = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let inner = {
            let vals: Vec<usize> = ok.iter().filter_map(|r| r.inner_iters).collect();
            (!vals.is_empty()).then(|| (vals.iter().sum::<usize>() as f64 / vals.len() as f64).round() as usize)
        };
        let status = if ok.len() == group.len() {
            OK.to_string()
        } else {
            format!("partial {}/{}", ok.len(), group.len())
        };
        if first.iteration == 0 && ok.is_empty() {
            continue;
        }
        out.push(ResultRow {
            trial: MEAN.to_string(),
            error: mean(&|r| r.error),
            fit_residual: mean(&|r| r.fit_residual),
            inner_iters: inner,
            status,
            wall_time_secs: group.iter().map(|r| r.wall_time_secs).sum::<f64>(),
            ..first.clone()
        });
    }
    out
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Necessary).from_path(&tmp)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let rows = rd.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    library: &'static str,
    version: &'static str,
    spec: &'a ExperimentSpec,
    rho: f64,
    cells: usize,
    rows: usize,
    failed_trials: usize,
    resumed_groups: usize,
    wall_time_secs: f64,
}

/// Path of the JSON sidecar next to `csv_path`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn write_sidecar(table: &ResultTable, wall: f64) -> Result<()> {
    let side = Sidecar {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec: &table.spec,
        rho: table.spec.rho(),
        cells: table.spec.cells().len(),
        rows: table.rows.len(),
        failed_trials: table.failed_trials,
        resumed_groups: table.resumed_groups,
        wall_time_secs: wall,
    };
    fs::write(sidecar_path(&table.spec.output), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}
