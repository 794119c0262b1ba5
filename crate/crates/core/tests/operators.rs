mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use moddisc::evo::{
    crossover_seeded, immutable_multiset, lasso_fit_with, mutate_node, mutate_subtree, regularize_dispersion, LassoOptions,
};
use moddisc::graph::{validate, FeatureMatrix};
use moddisc::objectives::{complexity, ComplexityMode};
use moddisc::tasks::Task;

/// Orthogonal ±1 columns of an 8-row Hadamard design.
fn hadamard() -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..8u32)
        .map(|i| (1..8u32).map(|j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect())
        .collect();
    FeatureMatrix::from_rows(0, &rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mutations_keep_validity_and_scaffolding(seed in any::<u64>(), p in 0.0f64..=1.0) {
        let expr = common::expr_task(64);
        let ml = common::ml_task(192, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for task in [&expr as &dyn Task, &ml] {
            let m = task.random_model(&mut rng).unwrap();
            let (a, _) = mutate_node(&m, task.registry(), &mut rng, p);
            let (b, _) = mutate_subtree(&m, task.registry(), &mut rng, p);
            for child in [a, b] {
                prop_assert!(validate(&child).ok());
                prop_assert_eq!(immutable_multiset(&child), immutable_multiset(&m));
            }
        }
    }

    #[test]
    fn crossover_is_deterministic_and_mirrored(seed in any::<u64>(), sa in any::<u64>(), sb in any::<u64>()) {
        let task = common::ml_task(192, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = task.random_model(&mut rng).unwrap();
        let b = task.random_model(&mut rng).unwrap();
        let (x, y) = crossover_seeded(&a, &b, sa, sb);
        let (x2, y2) = crossover_seeded(&a, &b, sa, sb);
        prop_assert_eq!(&x, &x2);
        prop_assert_eq!(&y, &y2);
        let (ys, xs) = crossover_seeded(&b, &a, sb, sa);
        prop_assert_eq!(x, xs);
        prop_assert_eq!(y, ys);
    }

    #[test]
    fn regularization_is_idempotent_and_never_grows(seed in any::<u64>(), tau in 0.0f64..0.5) {
        let task = common::expr_task(128);
        let m = task.random_model(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let once = regularize_dispersion(&m, task.data(), tau);
        let twice = regularize_dispersion(&once, task.data(), tau);
        prop_assert!(validate(&once).ok());
        prop_assert_eq!(&once, &twice);
        prop_assert!(complexity(&once, ComplexityMode::Nodes) <= complexity(&m, ComplexityMode::Nodes));
    }

    #[test]
    fn lasso_support_shrinks_with_penalty(y in prop::collection::vec(-3.0f64..3.0, 8), l1 in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let x = hadamard();
        let opts = LassoOptions { intercept: false };
        let a = lasso_fit_with(&x, &y, l1, opts).unwrap();
        let b = lasso_fit_with(&x, &y, l1 + extra, opts).unwrap();
        for j in 0..x.cols {
            prop_assert!(b.coef[j] == 0.0 || a.coef[j] != 0.0);
        }
    }
}
