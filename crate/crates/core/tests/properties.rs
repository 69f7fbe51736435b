use levy_shrink::data::{fold_ids, Dataset, SplitPlan};
use levy_shrink::levy::Family;
use levy_shrink::means::{MeansProblem, ShrinkagePrior};
use levy_shrink::ortho::{gibbs_fit, kappa_weights, svd_orthogonalize, GibbsConfig, Method};
use levy_shrink::penalty::{PenaltySpec, Transform};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Gamma),
        (0.05f64..0.95).prop_map(|alpha| Family::Stable { alpha }),
        (0.1f64..5.0).prop_map(|rate| Family::InverseGaussian { rate }),
        (0.1f64..5.0, 0.1f64..3.0).prop_map(|(jump_rate, jump_sd)| Family::CompoundPoisson { jump_rate, jump_sd }),
    ]
}

fn transform() -> impl Strategy<Value = Transform> {
    prop_oneof![Just(Transform::HalfSquare), Just(Transform::Abs)]
}

fn matrix(n: usize, p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * p).prop_map(move |v| DMatrix::from_vec(n, p, v))
}

proptest! {
    #[test]
    fn exponent_is_increasing_and_concave(f in family(), t in 1e-3f64..1e3, h in 1e-3f64..1.0) {
        let (a, b, c) = (f.psi(t), f.psi(t * (1.0 + h)), f.psi(t * (1.0 + 2.0 * h)));
        prop_assert!(b >= a && c >= b);
        // Chord slopes of a concave function do not increase.
        prop_assert!((c - b) <= (b - a) * (1.0 + 1e-9) + 1e-15);
        prop_assert!(f.psi_prime(t) > 0.0);
    }

    #[test]
    fn penalty_is_even_and_monotone(f in family(), tr in transform(), nu in 0.1f64..5.0, b in 0.0f64..20.0, step in 0.0f64..5.0) {
        let spec = PenaltySpec::new(f, tr, nu).unwrap();
        prop_assert_eq!(spec.penalty_value(b), spec.penalty_value(-b));
        prop_assert!(spec.penalty_value(b + step) >= spec.penalty_value(b));
        prop_assert!(spec.penalty_value(b) >= 0.0);
    }

    #[test]
    fn oracle_mean_is_odd_and_shrinks(nu in 0.2f64..4.0, sigma in 0.3f64..3.0, y in -15.0f64..15.0) {
        let p = MeansProblem::new(ShrinkagePrior::Penalty(PenaltySpec::lasso(nu).unwrap()), sigma).unwrap();
        let up = p.posterior_mean_oracle(y).unwrap();
        let down = p.posterior_mean_oracle(-y).unwrap();
        prop_assert!((up + down).abs() < 1e-9 * (1.0 + y.abs()));
        prop_assert!(up.abs() <= y.abs() + 1e-12);
        prop_assert!(up * y >= 0.0);
    }

    #[test]
    fn standardization_is_idempotent(x in matrix(12, 4), y in prop::collection::vec(-5.0f64..5.0, 12)) {
        let d = Dataset::new(x, DVector::from_vec(y), (0..4).map(|j| format!("x{j}")).collect(), "y").unwrap();
        let Ok(once) = d.standardized() else { return Ok(()) };
        let twice = once.standardized().unwrap();
        prop_assert_eq!(once.p(), twice.p());
        prop_assert!((&once.x - &twice.x).amax() < 1e-10);
        prop_assert!((&once.y - &twice.y).amax() < 1e-10);
    }

    #[test]
    fn splits_are_deterministic_partitions(n in 20usize..200, k in 2usize..10, seed in any::<u64>()) {
        let a = SplitPlan::new(n, 0.75, k, seed).unwrap();
        prop_assert_eq!(&a, &SplitPlan::new(n, 0.75, k, seed).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).cloned().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(a.folds.iter().all(|f| *f < k));
    }

    #[test]
    fn cv_scores_ignore_fold_relabeling(x in matrix(30, 3), seed in 0u64..1000, shift in 1usize..5) {
        use levy_shrink::data::cv_tune;
        use levy_shrink::par::Execution;
        let y = DVector::from_fn(30, |i, _| x[(i, 0)] - 0.5 * x[(i, 2)] + (i as f64 * 0.7).sin());
        let folds = fold_ids(30, 5, seed);
        let relabeled: Vec<usize> = folds.iter().map(|f| (f + shift) % 5).collect();
        let grid = [Method::Ridge(0.1), Method::Ridge(1.0), Method::Ridge(10.0)];
        let (Ok(a), Ok(b)) = (
            cv_tune(&x, &y, &grid, &folds, Execution::Sequential),
            cv_tune(&x, &y, &grid, &relabeled, Execution::Sequential),
        ) else { return Ok(()) };
        prop_assert_eq!(a.index, b.index);
        for (s, t) in a.scores.iter().zip(&b.scores) {
            prop_assert!((s - t).abs() <= 1e-10 * s.abs().max(1.0));
        }
    }

    #[test]
    fn ridge_weights_lie_in_unit_interval(x in matrix(15, 5), nu in 1e-3f64..1e3) {
        let y = DVector::from_fn(15, |i, _| i as f64);
        let Ok(model) = svd_orthogonalize(&x, &y) else { return Ok(()) };
        let k = kappa_weights(&model, Method::Ridge(nu)).unwrap().kappa;
        prop_assert!(k.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gibbs_is_reproducible(x in matrix(20, 4), seed in any::<u64>()) {
        let y = DVector::from_fn(20, |i, _| x[(i, 1)] + 0.3 * (i as f64).cos());
        let Ok(model) = svd_orthogonalize(&x, &y) else { return Ok(()) };
        let cfg = GibbsConfig { iterations: 200, burn_in: 50, seed, ..GibbsConfig::default() };
        let a = gibbs_fit(&model, &cfg).unwrap();
        prop_assert_eq!(&a, &gibbs_fit(&model, &cfg).unwrap());
        prop_assert!(a.kappa_fb.iter().all(|k| *k >= 0.0 && *k <= 1.0));
    }
}
