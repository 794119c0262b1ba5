mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use moddisc::graph::{parse, serialize};
use moddisc::objectives::{complexity, equation_residual, rmse, robust_objective, ComplexityMode, EnsembleResult};
use moddisc::tasks::Task;

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, n)
}

proptest! {
    #[test]
    fn rmse_is_a_metric((a, b, c) in (1usize..40).prop_flat_map(|n| (vec_of(n), vec_of(n), vec_of(n)))) {
        let ab = rmse(&a, &b).unwrap();
        prop_assert_eq!(ab, rmse(&b, &a).unwrap());
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let (bc, ac) = (rmse(&b, &c).unwrap(), rmse(&a, &c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-9 * (1.0 + ab + bc));
    }

    #[test]
    fn robust_objective_ignores_order(errors in prop::collection::vec(0.0f64..10.0, 2..20), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = errors.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = robust_objective(&EnsembleResult { errors }).unwrap();
        let b = robust_objective(&EnsembleResult { errors: shuffled }).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn residual_ignores_term_order(
        (terms, coefs, target) in (1usize..5, 3usize..30).prop_flat_map(|(k, n)| (
            prop::collection::vec(vec_of(n), k),
            prop::collection::vec(-3.0f64..3.0, k),
            vec_of(n),
        )),
        intercept in -1.0f64..1.0,
    ) {
        let a = equation_residual(&terms, &coefs, intercept, &target).unwrap();
        let (rt, rc): (Vec<Vec<f64>>, Vec<f64>) = terms.iter().cloned().zip(coefs.iter().copied()).rev().unzip();
        let b = equation_residual(&rt, &rc, intercept, &target).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn complexity_survives_serialization(seed in any::<u64>()) {
        let task = common::expr_task(64);
        let m = task.random_model(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let back = parse(&serialize(&m)).unwrap();
        for mode in [ComplexityMode::Tokens, ComplexityMode::Terms, ComplexityMode::Nodes] {
            prop_assert_eq!(complexity(&m, mode), complexity(&back, mode));
        }
    }
}

#[test]
fn larger_errors_score_worse() {
    let base = EnsembleResult { errors: vec![0.1, 0.3, 0.2, 0.5] };
    let scaled = EnsembleResult { errors: base.errors.iter().map(|e| e * 10.0).collect() };
    assert!(robust_objective(&scaled).unwrap() > robust_objective(&base).unwrap());
}
