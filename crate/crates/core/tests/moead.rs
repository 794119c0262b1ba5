mod common;

use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moddisc::atoms::{AtomInstance, AtomRegistry};
use moddisc::graph::CompositeModel;
use moddisc::io::{Config, SearchConfig};
use moddisc::moead::{
    dominates, hypervolume_2d, nondominated_sort, run, run_with, update_population, Individual, Population, WeightLattice,
};
use moddisc::tasks::{Task, TaskError, ToyTask};

fn toy_config(seed: u64, epochs: usize) -> SearchConfig {
    let mut c = Config::default().search;
    c.seed = seed;
    c.epochs = epochs;
    c
}

/// The toy problem with evaluations failing above `x = 2.5`.
struct Flaky(ToyTask);

impl Task for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }
    fn objective_names(&self) -> Vec<String> {
        self.0.objective_names()
    }
    fn registry(&self) -> &AtomRegistry {
        self.0.registry()
    }
    fn random_model(&self, rng: &mut dyn RngCore) -> Result<CompositeModel, TaskError> {
        self.0.random_model(rng)
    }
    fn conforms(&self, model: &CompositeModel) -> bool {
        self.0.conforms(model)
    }
    fn vary(&self, a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel) {
        self.0.vary(a, b, rng)
    }
    fn evaluate(&self, model: &CompositeModel, rng: &mut dyn RngCore) -> Result<(CompositeModel, Vec<f64>), TaskError> {
        match ToyTask::value(model) {
            Some(x) if x > 2.5 => Err(TaskError::Template("refused".into())),
            _ => self.0.evaluate(model, rng),
        }
    }
    fn render(&self, model: &CompositeModel) -> String {
        self.0.render(model)
    }
}

#[test]
#[ignore = "θ=5 PBI trades the extremes of this convex front for interior points, so the level-0 hypervolume drifts down"]
fn hypervolume_rarely_drops_between_epochs() {
    let (mut steps, mut rises) = (0, 0);
    for seed in 0..20 {
        let mut previous: Option<f64> = None;
        run_with(&ToyTask::new(), &toy_config(seed, 30), &[], |s| {
            let hv = hypervolume_2d(&s.front, [5.0, 5.0]);
            if let Some(p) = previous {
                steps += 1;
                rises += usize::from(hv >= p - 1e-12);
            }
            previous = Some(hv);
        })
        .unwrap();
    }
    assert!(rises as f64 >= 0.95 * steps as f64, "{rises}/{steps} non-decreasing transitions");
}

#[test]
fn level_zero_keeps_the_best_scalarized_point_of_each_weight() {
    // an individual sitting at the PBI optimum of its own weight is never the
    // worst member of its subregion, so the optima survive once found
    let optimum = |theta: f64| 2.0 / (1.0 + theta);
    let frontier = run(&ToyTask::new(), &toy_config(2, 30)).unwrap();
    let xs: Vec<f64> = frontier.members.iter().map(|m| ToyTask::value(&m.model).unwrap()).collect();
    let near = |target: f64| xs.iter().any(|x| (x - target).abs() < 0.05);
    assert!(near(optimum(5.0)), "{xs:?}");
    assert!(near(2.0 - optimum(5.0)), "{xs:?}");
    assert!(xs.iter().all(|x| (0.0..=2.0).contains(x)));
}

#[test]
fn ideal_point_never_rises() {
    let mut previous: Option<Vec<f64>> = None;
    run_with(&ToyTask::new(), &toy_config(4, 20), &[], |s| {
        if let Some(p) = &previous {
            assert!(s.ideal.iter().zip(p).all(|(a, b)| a <= b));
        }
        previous = Some(s.ideal.clone());
    })
    .unwrap();
}

#[test]
fn frontier_is_mutually_non_dominated_and_reproducible() {
    for seed in [1, 2, 3] {
        let a = run(&ToyTask::new(), &toy_config(seed, 10)).unwrap();
        let b = run(&ToyTask::new(), &toy_config(seed, 10)).unwrap();
        assert_eq!(a, b);
        for x in &a.members {
            assert!(a.members.iter().all(|y| !dominates(&y.objectives, &x.objectives)));
        }
    }
}

#[test]
fn zero_epochs_return_the_initial_front() {
    let xs = [-0.5, 0.0, 0.5, 1.0, 2.0, 2.5, 3.0];
    let initial: Vec<CompositeModel> = xs.iter().map(|x| CompositeModel::single(AtomInstance::constant(*x))).collect();
    let mut cfg = toy_config(0, 0);
    cfg.n = xs.len();
    let frontier = run_with(&ToyTask::new(), &cfg, &initial, |_| {}).unwrap();
    let got: Vec<f64> = frontier.members.iter().map(|m| ToyTask::value(&m.model).unwrap()).collect();
    assert_eq!(got, vec![0.0, 0.5, 1.0, 2.0]);
}

#[test]
fn failed_evaluations_are_penalised_not_fatal() {
    let frontier = run(&Flaky(ToyTask::new()), &toy_config(5, 10)).unwrap();
    assert!(!frontier.is_empty());
    assert!(frontier.members.iter().all(|m| ToyTask::value(&m.model).unwrap() <= 2.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sort_matches_brute_force(objs in prop::collection::vec(prop::collection::vec(0u8..12, 3), 1..120)) {
        let objs: Vec<Vec<f64>> = objs.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
        let mut fast = nondominated_sort(&objs).unwrap();
        for l in &mut fast {
            l.sort_unstable();
        }
        prop_assert_eq!(fast, common::brute_levels(&objs));
    }

    #[test]
    fn updates_respect_capacity_and_regions(seed in any::<u64>(), capacity in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lattice = WeightLattice::new(2, 6, 3).unwrap();
        let mut pop = Population::new(capacity);
        for _ in 0..40 {
            let f = vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
            if lattice.update_ideal(&f) {
                pop.reassociate(&lattice);
            }
            let x = CompositeModel::single(AtomInstance::constant(f[0]));
            update_population(&mut pop, Individual::new(x, f, 0), &lattice, 5.0);
            prop_assert!(pop.len() <= capacity);
            for ind in &pop.individuals {
                prop_assert!(ind.subregion < lattice.len());
                prop_assert_eq!(ind.subregion, lattice.associate(&ind.objectives));
            }
        }
    }
}
