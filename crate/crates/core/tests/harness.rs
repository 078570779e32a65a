use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use romd::harness::{read_rows, run, run_curve, run_phase, sidecar_path, Dims, ExperimentSpec, Family};
use romd::learner::Engine;
use romd::RomdError;

fn small_phase(out: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::desk(Family::Phase, out);
    spec.dims = vec![Dims { m: 8, k: 12, s: 2 }];
    spec.samples = vec![48, 64];
    spec.trials = 2;
    spec.baseline_iters = 5;
    spec
}

fn small_learning(family: Family, out: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::desk(family, out);
    spec.dims = vec![Dims { m: 8, k: 12, s: 2 }];
    spec.samples = vec![60];
    spec.trials = 2;
    spec.romd_iters = 4;
    spec.baseline_iters = 4;
    spec.max_admm_iter = 60;
    spec
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_phase(&dir.path().join("a.csv"));
    let b = small_phase(&dir.path().join("b.csv"));
    run_phase(&a).unwrap();
    run_phase(&b).unwrap();
    assert_eq!(fs::read(&a.output).unwrap(), fs::read(&b.output).unwrap());
    assert!(sidecar_path(&a.output).exists());

    let mut c = small_phase(&dir.path().join("c.csv"));
    c.base_seed = 99;
    run_phase(&c).unwrap();
    assert_ne!(fs::read(&a.output).unwrap(), fs::read(&c.output).unwrap());
}

#[test]
fn thread_count_does_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let spec = small_learning(Family::Curve, &dir.path().join(format!("t{threads}.csv")));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_curve(&spec)).unwrap();
        outputs.push(fs::read(&spec.output).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn zero_trials_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_learning(Family::Curve, &dir.path().join("none.csv"));
    spec.trials = 0;
    assert!(matches!(run(&spec), Err(RomdError::InvalidConfig(_))));
    assert!(!spec.output.exists());
    assert!(!sidecar_path(&spec.output).exists());
}

#[test]
fn other_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_phase(&dir.path().join("v.csv"));
    let mut s = base.clone();
    s.dims = vec![Dims { m: 4, k: 8, s: 5 }];
    assert!(s.validate().is_err());
    let mut s = base.clone();
    s.samples.clear();
    assert!(s.validate().is_err());
    let mut s = base.clone();
    s.engines.clear();
    assert!(s.validate().is_err());
    let mut s = base.clone();
    s.rho = Some(-1.0);
    assert!(s.validate().is_err());
    assert!(run_curve(&base).is_err(), "family mismatch");
}

#[test]
fn mean_rows_are_trial_averages() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_learning(Family::Curve, &dir.path().join("curve.csv"));
    let table = run(&spec).unwrap();
    let rows = read_rows(&spec.output).unwrap();
    let untimed: Vec<_> = table.rows.iter().map(|r| romd::harness::ResultRow { wall_time_secs: 0.0, ..r.clone() }).collect();
    assert_eq!(rows, untimed);

    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_mean()) {
        groups.entry((r.engine.clone(), r.iteration)).or_default().push(r.error.unwrap());
    }
    // one row per trial for every (engine, iteration)
    assert_eq!(groups.len(), 3 * spec.romd_iters);
    for ((engine, it), errs) in &groups {
        assert_eq!(errs.len(), spec.trials);
        let mean = rows.iter().find(|r| r.is_mean() && &r.engine == engine && r.iteration == *it).unwrap();
        let expected = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!((mean.error.unwrap() - expected).abs() <= 1e-12);
    }
}

#[test]
fn rerun_skips_completed_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_phase(&dir.path().join("resume.csv"));
    spec.samples = vec![48];
    let first = run(&spec).unwrap();
    assert_eq!(first.resumed_groups, 0);
    let bytes = fs::read(&spec.output).unwrap();

    let again = run(&spec).unwrap();
    assert_eq!(again.resumed_groups, 3);
    assert_eq!(fs::read(&spec.output).unwrap(), bytes);

    // a grown grid reruns only the new cell and matches a fresh run
    spec.samples = vec![48, 64];
    let grown = run(&spec).unwrap();
    assert_eq!(grown.resumed_groups, 3);
    let fresh = small_phase(&dir.path().join("fresh.csv"));
    run(&fresh).unwrap();
    assert_eq!(fs::read(&spec.output).unwrap(), fs::read(&fresh.output).unwrap());
}

#[test]
fn duplicate_grid_entries_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_phase(&dir.path().join("dup.csv"));
    spec.samples = vec![64, 48, 64];
    spec.dims.push(spec.dims[0]);
    assert_eq!(spec.cells().len(), 2);
    let table = run(&spec).unwrap();
    assert_eq!(table.trial_rows().count(), 2 * 3 * spec.trials);
}

#[test]
fn infinite_snr_matches_the_sample_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = small_learning(Family::SweepN, &dir.path().join("sweep.csv"));
    let mut noisy = small_learning(Family::Noisy, &dir.path().join("noisy.csv"));
    noisy.snr_db = vec![f64::INFINITY];
    noisy.rho = Some(sweep.rho());
    let a = run(&sweep).unwrap();
    let b = run(&noisy).unwrap();
    let errs = |t: &romd::harness::ResultTable| t.trial_rows().map(|r| (r.engine.clone(), r.trial.clone(), r.error)).collect::<Vec<_>>();
    assert_eq!(errs(&a), errs(&b));
}

#[test]
fn noisy_rho_default_and_pairing() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_learning(Family::Noisy, &dir.path().join("pair.csv"));
    assert_eq!(spec.rho(), 0.02);
    assert_eq!(ExperimentSpec::desk(Family::Curve, "x.csv").rho(), 0.8);
    spec.dims = vec![Dims { m: 8, k: 16, s: 2 }];
    spec.samples = vec![100];
    spec.trials = 4;
    spec.engines = vec![Engine::Romd];
    spec.romd_iters = 10;
    spec.max_admm_iter = 300;
    let table = run(&spec).unwrap();
    let cell = |snr: f64| spec.cells().into_iter().find(|c| c.snr_db == Some(snr)).unwrap();
    let e20 = table.mean_error(&cell(20.0), Engine::Romd, None).unwrap();
    let e30 = table.mean_error(&cell(30.0), Engine::Romd, None).unwrap();
    assert!(e20 > e30, "20dB {e20} vs 30dB {e30}");
}

#[test]
fn sparsity_one_needs_more_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::desk(Family::Phase, dir.path().join("s1.csv"));
    spec.dims = vec![Dims { m: 16, k: 32, s: 1 }, Dims { m: 16, k: 32, s: 2 }];
    spec.samples = vec![64, 128];
    spec.trials = 5;
    spec.engines = vec![Engine::Romd];
    let table = run(&spec).unwrap();
    for n in [64, 128] {
        let err = |s: usize| {
            let c = spec.cells().into_iter().find(|c| c.s == s && c.n == n).unwrap();
            table.mean_error(&c, Engine::Romd, None).unwrap()
        };
        assert!(err(1) > err(2), "N={n}: S=1 {} vs S=2 {}", err(1), err(2));
    }
}

#[test]
fn too_few_samples_defeats_every_engine() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_learning(Family::SweepN, &dir.path().join("tiny.csv"));
    spec.dims = vec![Dims { m: 8, k: 16, s: 1 }];
    spec.samples = vec![6];
    let table = run(&spec).unwrap();
    let cell = spec.cells()[0];
    for e in Engine::ALL {
        // at most 6 of the 16 atoms are ever used
        let err = table.mean_error(&cell, e, None).unwrap();
        assert!(err > 0.2, "{e}: {err}");
    }
}

#[test]
fn csv_has_a_header_naming_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_phase(&dir.path().join("h.csv"));
    run(&spec).unwrap();
    let text = fs::read_to_string(&spec.output).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "family,m,k,s,n,snr_db,engine,trial,iteration,error,fit_residual,inner_iters,status"
    );
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(sidecar_path(&spec.output)).unwrap()).unwrap();
    assert_eq!(side["spec"]["family"], "phase");
    assert_eq!(side["spec"]["engines"][0], "romd");
}
