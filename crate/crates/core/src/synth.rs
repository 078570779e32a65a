//! Seeded synthetic problems: Gaussian unit-norm dictionaries, exactly
//! `S`-sparse Gaussian codes, and noise rescaled to an exact SNR.
//!
//! Random streams come from ChaCha20 (`rand_chacha` 0.9) seeded through
//! `seed_from_u64`. Seeds for sub-experiments are derived with
//! [`derive_seed`], a SplitMix64 fold over the path components, so any cell
//! or trial can be regenerated on its own. Draw order for an instance:
//! dictionary entries column by column, then for each sample column its
//! support (partial Fisher-Yates over `0..K`, sorted) followed by its values.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomdError};
use crate::linalg::{normalize_columns, DenseMatrix};

pub type ExperimentRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> ExperimentRng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `base` along `path`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(rows, cols);
    for v in a.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    a
}

/// Gaussian matrix with unit-norm columns.
pub fn random_dictionary<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    loop {
        let a = gaussian_matrix(rows, cols, rng);
        if let Ok((d, _)) = normalize_columns(&a) {
            return d;
        }
    }
}

/// Sorted uniform `s`-subset of `0..k`.
pub fn random_support<R: Rng + ?Sized>(k: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..k).collect();
    for i in 0..s {
        let j = rng.random_range(i..k);
        pool.swap(i, j);
    }
    let mut out = pool[..s].to_vec();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub d_true: DenseMatrix,
    pub x_true: DenseMatrix,
    pub y_clean: DenseMatrix,
    pub y: DenseMatrix,
    pub noise_norm: f64,
    pub seed: u64,
}

pub fn gen_instance(m: usize, k: usize, n: usize, s: usize, seed: u64) -> Result<ProblemInstance> {
    if m == 0 || k == 0 || n == 0 {
        return Err(RomdError::InvalidConfig(format!("dimensions must be positive: M={m}, K={k}, N={n}")));
    }
    if s == 0 || s > m.min(k) {
        return Err(RomdError::InvalidConfig(format!("sparsity S={s} must lie in 1..=min(M, K)={}", m.min(k))));
    }
    let mut rng = rng_from_seed(seed);
    let d_true = random_dictionary(m, k, &mut rng);
    let mut x_true = DenseMatrix::zeros(k, n);
    for col in 0..n {
        for idx in random_support(k, s, &mut rng) {
            let mut v: f64 = StandardNormal.sample(&mut rng);
            // a Gaussian draw of exactly zero would break the support count
            while v == 0.0 {
                v = StandardNormal.sample(&mut rng);
            }
            x_true[(idx, col)] = v;
        }
    }
    let y_clean = &d_true * &x_true;
    Ok(ProblemInstance {
        d_true,
        x_true,
        y: y_clean.clone(),
        y_clean,
        noise_norm: 0.0,
        seed,
    })
}

/// `Y = Y_clean + E`, with `E` Gaussian rescaled so that
/// `10 log10(||Y_clean||^2 / ||E||^2) = snr_db` exactly. `+inf` is noise-free.
pub fn add_noise(instance: &ProblemInstance, snr_db: f64, seed: u64) -> Result<ProblemInstance> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(RomdError::InvalidConfig(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let mut out = instance.clone();
    if snr_db == f64::INFINITY {
        out.y = instance.y_clean.clone();
        out.noise_norm = 0.0;
        return Ok(out);
    }
    let mut rng = rng_from_seed(seed);
    let (m, n) = instance.y_clean.shape();
    let mut e = gaussian_matrix(m, n, &mut rng);
    let target = instance.y_clean.norm() * 10f64.powf(-snr_db / 20.0);
    let e_norm = e.norm();
    if e_norm > 0.0 {
        e *= target / e_norm;
    }
    out.noise_norm = e.norm();
    out.y = &instance.y_clean + e;
    Ok(out)
}

/// Realized SNR in dB of `y` against `y_clean`.
pub fn realized_snr_db(instance: &ProblemInstance) -> f64 {
    let noise = (&instance.y - &instance.y_clean).norm_squared();
    10.0 * (instance.y_clean.norm_squared() / noise).log10()
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceHeader {
    m: usize,
    k: usize,
    n: usize,
    seed: u64,
    noise_norm: f64,
    files: Vec<String>,
}

fn write_matrix_csv(path: &Path, a: &DenseMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..a.nrows() {
        w.write_record(a.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut a = DenseMatrix::zeros(rows, cols);
    let mut i = 0;
    for rec in r.records() {
        let rec = rec?;
        if i >= rows || rec.len() != cols {
            return Err(RomdError::Io(format!("{}: unexpected shape", path.display())));
        }
        for (j, field) in rec.iter().enumerate() {
            a[(i, j)] = field
                .parse()
                .map_err(|_| RomdError::Io(format!("{}: bad number {field:?}", path.display())))?;
        }
        i += 1;
    }
    if i != rows {
        return Err(RomdError::Io(format!("{}: expected {rows} rows, found {i}", path.display())));
    }
    Ok(a)
}

/// Writes `<stem>.json` plus one headerless CSV per matrix
/// (`<stem>.d.csv`, `<stem>.x.csv`, `<stem>.yclean.csv`, `<stem>.y.csv`).
/// Values use Rust's shortest round-trip scientific formatting.
pub fn dump_instance(instance: &ProblemInstance, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let names = ["d", "x", "yclean", "y"];
    let mats = [&instance.d_true, &instance.x_true, &instance.y_clean, &instance.y];
    let mut files = Vec::new();
    for (name, mat) in names.iter().zip(mats) {
        let file = format!("{stem}.{name}.csv");
        write_matrix_csv(&dir.join(&file), mat)?;
        files.push(file);
    }
    let header = InstanceHeader {
        m: instance.d_true.nrows(),
        k: instance.d_true.ncols(),
        n: instance.x_true.ncols(),
        seed: instance.seed,
        noise_norm: instance.noise_norm,
        files,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn load_instance(dir: &Path, stem: &str) -> Result<ProblemInstance> {
    let header: InstanceHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let (m, k, n) = (header.m, header.k, header.n);
    Ok(ProblemInstance {
        d_true: read_matrix_csv(&dir.join(format!("{stem}.d.csv")), m, k)?,
        x_true: read_matrix_csv(&dir.join(format!("{stem}.x.csv")), k, n)?,
        y_clean: read_matrix_csv(&dir.join(format!("{stem}.yclean.csv")), m, n)?,
        y: read_matrix_csv(&dir.join(format!("{stem}.y.csv")), m, n)?,
        noise_norm: header.noise_norm,
        seed: header.seed,
    })
}
