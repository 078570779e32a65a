use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::error;

use romd::harness::{self, Dims, ExperimentSpec, Family};
use romd::learner::Engine;
use romd::metrics::recovery_error;
use romd::romd::{romd_dict_update, svt, AdmmConfig};
use romd::support::{gather, scatter_add, sum_scatter, BlockSet, SupportPattern};
use romd::synth::{gaussian_matrix, gen_instance, rng_from_seed};
use romd::{DenseMatrix, RomdError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "romd", version, about = "Dictionary learning experiments with the convex ROMD update")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dictionary update on ground-truth supports over an (S, N) grid
    Phase(GridArgs),
    /// Per-iteration learning curves
    Curve(GridArgs),
    /// Final learning error against the number of samples
    SweepN(GridArgs),
    /// Learning on noisy data at the given SNRs
    Noisy(GridArgs),
    /// Quick internal consistency checks
    Selftest,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Signal dimensions, comma separated; paired with --k
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    /// Atom counts, one per --m value (or a single value for all)
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Sample counts
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Sparsity levels
    #[arg(long, value_delimiter = ',')]
    s: Vec<usize>,
    /// SNR values in dB (`inf` for noise-free)
    #[arg(long, value_delimiter = ',')]
    snr: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ADMM penalty; 0.02 for `noisy` and 0.8 otherwise when omitted
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated subset of romd, ksvd, mod
    #[arg(long, value_delimiter = ',')]
    engines: Vec<String>,
    /// Output CSV; a JSON sidecar is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full-size grids and 100 trials
    #[arg(long)]
    full_scale: bool,
    /// Outer iterations for every engine (phase: baseline rounds)
    #[arg(long)]
    iters: Option<usize>,
    /// ADMM iteration cap per dictionary update
    #[arg(long)]
    admm_iters: Option<usize>,
}

impl GridArgs {
    fn into_spec(self, family: Family) -> Result<ExperimentSpec, RomdError> {
        let out = self.out.unwrap_or_else(|| PathBuf::from(format!("results/{}.csv", family.name())));
        let mut spec = if self.full_scale {
            ExperimentSpec::full_scale(family, out)
        } else {
            ExperimentSpec::desk(family, out)
        };
        spec.base_seed = self.seed;
        spec.rho = self.rho;
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if !self.m.is_empty() || !self.k.is_empty() || !self.s.is_empty() {
            spec.dims = build_dims(&self.m, &self.k, &self.s, &spec.dims)?;
        }
        if !self.n.is_empty() {
            spec.samples = self.n;
        }
        if !self.snr.is_empty() {
            if family != Family::Noisy {
                return Err(RomdError::InvalidConfig("--snr only applies to the noisy family".into()));
            }
            spec.snr_db = self.snr;
        }
        if !self.engines.is_empty() {
            spec.engines = self
                .engines
                .iter()
                .map(|e| Engine::parse(e).ok_or_else(|| RomdError::InvalidConfig(format!("unknown engine {e:?}"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(it) = self.iters {
            if family == Family::Phase {
                spec.baseline_iters = it;
            } else {
                spec.romd_iters = it;
                spec.baseline_iters = it;
            }
        }
        if let Some(a) = self.admm_iters {
            spec.max_admm_iter = a;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Pair `m` with `k` (a single `k` broadcasts) and cross with `s`. Missing
/// axes fall back to the defaults.
fn build_dims(m: &[usize], k: &[usize], s: &[usize], defaults: &[Dims]) -> Result<Vec<Dims>, RomdError> {
    let base_mk: Vec<(usize, usize)> = defaults.iter().map(|d| (d.m, d.k)).collect();
    let mk: Vec<(usize, usize)> = match (m.is_empty(), k.is_empty()) {
        (true, true) => base_mk,
        (false, true) => m.iter().map(|&m| (m, 2 * m)).collect(),
        (true, false) => return Err(RomdError::InvalidConfig("--k needs --m".into())),
        (false, false) if k.len() == 1 => m.iter().map(|&m| (m, k[0])).collect(),
        (false, false) if k.len() == m.len() => m.iter().copied().zip(k.iter().copied()).collect(),
        _ => return Err(RomdError::InvalidConfig(format!("--k takes 1 or {} values, got {}", m.len(), k.len()))),
    };
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (m, k) in mk {
        let sparsities: Vec<usize> = if s.is_empty() {
            defaults.iter().map(|d| d.s).collect()
        } else {
            s.to_vec()
        };
        for s in sparsities {
            if seen.insert((m, k, s)) {
                out.push(Dims { m, k, s });
            }
        }
    }
    Ok(out)
}

fn run_family(family: Family, args: GridArgs) -> ExitCode {
    let spec = match args.into_spec(family) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match harness::run(&spec) {
        Ok(table) => {
            println!(
                "{}: {} rows written to {} ({} groups resumed)",
                family,
                table.rows.len(),
                spec.output.display(),
                table.resumed_groups
            );
            for row in table.mean_rows().filter(|r| family != Family::Curve || r.iteration % 10 == 0) {
                println!(
                    "  {} {:<5} it {:>4}  error {}",
                    row.cell(),
                    row.engine,
                    row.iteration,
                    row.error.map_or("n/a".to_string(), |e| format!("{e:.4e}"))
                );
            }
            if table.is_partial() {
                eprintln!("warning: {} trials failed", table.trial_rows().filter(|r| !r.is_ok()).count());
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ RomdError::InvalidConfig(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(e) => {
            error!("{family} failed: {e}");
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}

fn check(name: &str, ok: bool, failures: &mut usize) {
    println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failures += 1;
    }
}

fn selftest() -> ExitCode {
    let mut failures = 0;
    let run = || -> Result<Vec<(&'static str, bool)>, RomdError> {
        let mut out = Vec::new();
        let mut rng = rng_from_seed(1);

        let inst = gen_instance(6, 5, 12, 2, 2)?;
        let pattern = SupportPattern::from_coeffs(&inst.x_true, 0.0);
        let a = gaussian_matrix(6, 12, &mut rng);
        let mut worst: f64 = 0.0;
        for k in 0..5 {
            let b = gaussian_matrix(6, pattern.len_of(k), &mut rng);
            let mut sc = DenseMatrix::zeros(6, 12);
            scatter_add(&mut sc, &b, k, &pattern)?;
            worst = worst.max((gather(&a, k, &pattern)?.dot(&b) - a.dot(&sc)).abs());
        }
        out.push(("gather/scatter adjoint", worst < 1e-12));

        let blocks = BlockSet::from_factors(&inst.d_true, &inst.x_true, Arc::new(pattern))?;
        out.push(("sum_scatter reproduces D X", (sum_scatter(&blocks) - &inst.y).amax() < 1e-12));

        let q = gaussian_matrix(4, 5, &mut rng);
        let z = svt(&q, 1e6)?;
        out.push(("soft-threshold full truncation", z.amax() == 0.0));

        let single = Arc::new(SupportPattern::new(7, vec![(0..7).collect()])?);
        let u = gaussian_matrix(5, 1, &mut rng);
        let v = gaussian_matrix(1, 7, &mut rng);
        let y = &u * &v;
        let res = romd_dict_update(&y, single, &AdmmConfig::default(), None, None)?;
        out.push(("single atom rank-one recovery", (&res.dictionary * &res.coeffs - &y).amax() < 1e-8));

        out.push(("recovery error of identical dictionaries", recovery_error(&inst.d_true, &inst.d_true, true)?.error.abs() < 1e-12));

        let dir = std::env::temp_dir().join(format!("romd-selftest-{}", std::process::id()));
        let bytes = |name: &str| -> Result<Vec<u8>, RomdError> {
            let mut spec = ExperimentSpec::desk(Family::Phase, dir.join(name));
            spec.dims = vec![Dims { m: 8, k: 10, s: 2 }];
            spec.samples = vec![40];
            spec.trials = 2;
            spec.baseline_iters = 5;
            harness::run(&spec)?;
            Ok(std::fs::read(dir.join(name))?)
        };
        let same = bytes("a.csv")? == bytes("b.csv")?;
        let _ = std::fs::remove_dir_all(&dir);
        out.push(("seeded harness output is reproducible", same));
        Ok(out)
    };
    match run() {
        Ok(results) => {
            for (name, ok) in results {
                check(name, ok, &mut failures);
            }
        }
        Err(e) => {
            println!("FAIL selftest aborted: {e}");
            failures += 1;
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PARTIAL)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Phase(a) => run_family(Family::Phase, a),
        Command::Curve(a) => run_family(Family::Curve, a),
        Command::SweepN(a) => run_family(Family::SweepN, a),
        Command::Noisy(a) => run_family(Family::Noisy, a),
        Command::Selftest => selftest(),
    }
}
