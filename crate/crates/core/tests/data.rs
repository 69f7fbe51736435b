use levy_shrink::data::*;
use levy_shrink::ortho::Method;
use levy_shrink::par::Execution;
use levy_shrink::{rng, Error};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use std::fs;

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn eigen_desc(x: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = (x.transpose() * x).symmetric_eigenvalues().iter().cloned().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

#[test]
fn load_small_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "d.csv", "x,y\n1,2\n2,4\n4,5\n");
    let d = load_csv(&p, "y").unwrap();
    assert_eq!((d.n(), d.p()), (3, 1));
    assert!(d.x.column(0).mean().abs() < 1e-12);
    let sd = (d.x.column(0).norm_squared() / 2.0).sqrt();
    assert!((sd - 1.0).abs() < 1e-12);
    assert!(d.y.mean().abs() < 1e-12);

    let p = write(&dir, "c.csv", "a,b,y\n7,1,0\n7,2,1\n7,3,5\n");
    let d = load_csv(&p, "y").unwrap();
    assert_eq!(d.column_names, vec!["b"]);
    assert_eq!(d.standardization.unwrap().dropped, vec!["a"]);
}

#[test]
fn csv_round_trip() {
    let mut r = rng::seeded(2);
    let x = DMatrix::from_fn(9, 3, |_, _| StandardNormal.sample(&mut r));
    let y = DVector::from_fn(9, |i, _| i as f64 * 0.37 - 1.0);
    let d = Dataset::new(x, y, vec!["a".into(), "b".into(), "c".into()], "resp").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.csv");
    write_csv(&path, &d).unwrap();
    let back = read_csv_raw(&path, "resp").unwrap();
    assert_eq!(back.column_names, d.column_names);
    assert!((back.x - &d.x).amax() < 1e-12);
    assert!((back.y - &d.y).amax() < 1e-12);
}

#[test]
fn bad_csv_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "m.csv", "x,z,y\n1,,2\n2,3,NA\n3,1,1\n");
    let msg = load_csv(&p, "y").unwrap_err().to_string();
    assert!(msg.contains("line 2, column 'z'") && msg.contains("line 3, column 'y'"), "{msg}");

    let p = write(&dir, "p.csv", "x,y\n1,2\n2,abc\n");
    let msg = load_csv(&p, "y").unwrap_err().to_string();
    assert!(msg.contains("line 3") && msg.contains("abc"), "{msg}");

    assert!(matches!(load_csv(&p, "nope"), Err(Error::Data(_))));
    let one = write(&dir, "o.csv", "x,y\n1,2\n");
    assert!(load_csv(&one, "y").is_err());
}

#[test]
fn sse_examples() {
    let a = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let b = DVector::from_vec(vec![0.0, 0.0, 0.5]);
    assert_eq!(sse(&a, &b), 5.0);
    assert_eq!(sse(&b, &a), 5.0);
}

#[test]
fn factor_design_spectra() {
    // Overwhelming idiosyncratic noise spreads the spectrum.
    let noisy = FactorModelSpec { psi: 100.0, ..FactorModelSpec::strong_component() };
    let e = eigen_desc(&gen_factor_model(&noisy, 1).unwrap().dataset.x);
    assert!(e[0] / e.iter().sum::<f64>() < 0.5);

    for seed in 0..10 {
        let d = gen_factor_model(&FactorModelSpec::strong_component(), seed).unwrap();
        let x = d.dataset.standardized().unwrap().x;
        let s = x.singular_values();
        let mut s: Vec<f64> = s.iter().cloned().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[0] / s[1] > 20.0, "seed {seed}: {}", s[0] / s[1]);
    }

    // With B = ones and k = p the factors collapse onto one direction.
    let (n, p, psi) = (200, 10, 0.5);
    let spec = FactorModelSpec {
        n,
        p,
        k: p,
        psi,
        loadings: Loadings::Ones,
        response: ResponseModel::Factors { weights: vec![1.0; p], noise_sd: 1.0 },
    };
    let e = eigen_desc(&gen_factor_model(&spec, 3).unwrap().dataset.x);
    assert!(e[0] > 100.0 * psi * psi * n as f64);
    assert!(e[1..].iter().all(|v| *v < 10.0 * psi * psi * n as f64));
}

#[test]
fn factor_response_beta_is_best_linear_predictor() {
    let spec = FactorModelSpec::low_variance_response();
    let d = gen_factor_model(&spec, 4).unwrap();
    assert_eq!((d.dataset.n(), d.dataset.p()), (50, 100));
    assert!(d.alpha.is_none());
    // Check β against the normal equations Σβ = Bγ.
    let cov = &d.loadings * d.loadings.transpose() + DMatrix::identity(100, 100) * (spec.psi * spec.psi);
    let mut gamma = DVector::zeros(8);
    gamma[7] = 3.0;
    gamma[6] = 1.0;
    assert!((cov * &d.beta - &d.loadings * gamma).amax() < 1e-8);
    assert!(gen_factor_model(&FactorModelSpec { k: 0, ..spec }, 1).is_err());
}

#[test]
fn cv_tune_examples() {
    let mut r = rng::seeded(5);
    let x = DMatrix::from_fn(30, 4, |_, _| StandardNormal.sample(&mut r));
    let y = DVector::from_fn(30, |_, _| StandardNormal.sample(&mut r));
    let folds = fold_ids(30, 5, 1);
    let one = cv_tune(&x, &y, &[Method::Ridge(2.0)], &folds, Execution::Sequential).unwrap();
    assert_eq!((one.chosen, one.index, one.scores.len()), (Method::Ridge(2.0), 0, 1));
    assert!(cv_tune(&x, &y, &[], &folds, Execution::Sequential).is_err());
    assert!(cv_tune(&x, &y, &[Method::FullyBayes], &folds, Execution::Sequential).is_err());
    assert!(cv_tune(&x, &y, &[Method::Ridge(1.0)], &vec![0; 30], Execution::Sequential).is_err());

    // On pure noise CV lands in the heavily penalized half of the grid.
    let wins = (0..10)
        .filter(|s| {
            let mut r = rng::seeded(100 + s);
            let x = DMatrix::from_fn(60, 8, |_, _| StandardNormal.sample(&mut r));
            let y = DVector::from_fn(60, |_, _| StandardNormal.sample(&mut r));
            let grid = default_grid(GridKind::Ridge, &x, 8);
            let cv = cv_tune(&x, &y, &grid, &fold_ids(60, 10, *s), Execution::Sequential).unwrap();
            cv.index >= grid.len() / 2
        })
        .count();
    assert!(wins >= 8, "{wins}/10");

    // The strong component sits at index 11, so PCR must reach it.
    let reach = (0..10)
        .filter(|s| {
            let d = gen_factor_model(&FactorModelSpec::strong_component(), *s).unwrap().dataset.standardized().unwrap();
            let grid = default_grid(GridKind::Pcr, &d.x, 19);
            let cv = cv_tune(&d.x, &d.y, &grid, &fold_ids(100, 10, *s), Execution::Sequential).unwrap();
            matches!(cv.chosen, Method::Pcr(k) if k >= 12)
        })
        .count();
    assert!(reach >= 7, "{reach}/10");
}

#[test]
fn cv_is_parallel_invariant() {
    let d = gen_factor_model(&FactorModelSpec::strong_component(), 8).unwrap().dataset.standardized().unwrap();
    let grid = default_grid(GridKind::Pls, &d.x, 19);
    let folds = fold_ids(100, 10, 2);
    assert_eq!(
        cv_tune(&d.x, &d.y, &grid, &folds, Execution::Sequential).unwrap(),
        cv_tune(&d.x, &d.y, &grid, &folds, Execution::Parallel).unwrap()
    );
}

#[test]
fn holdout_benchmark_shape() {
    let d = gen_factor_model(&FactorModelSpec::strong_component(), 2).unwrap().dataset;
    let mut cfg = HoldoutConfig { splits: 3, seed: 11, ..HoldoutConfig::default() };
    cfg.gibbs.iterations = 600;
    cfg.gibbs.burn_in = 200;
    let a = holdout_benchmark(&d, &cfg).unwrap();
    let b = holdout_benchmark(&d, &HoldoutConfig { exec: Execution::Sequential, ..cfg.clone() }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.methods, ["Bayes", "PLS", "PCR", "RR", "g-prior"]);
    assert_eq!(a.per_split.len(), 3);
    assert!(a.mean_sse().iter().all(|v| v.is_finite() && *v > 0.0));
    assert_eq!(a.method_index("PCR"), Some(2));
    assert!(holdout_benchmark(&d, &HoldoutConfig { splits: 0, ..cfg }).is_err());
}
