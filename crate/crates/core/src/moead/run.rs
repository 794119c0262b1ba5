use std::collections::BTreeSet;

use log::{debug, info};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::lattice::{LatticeError, WeightLattice};
use super::population::{select_parents, update_population, Individual, Population};
use super::sort::{dominates, nondominated_sort};
use crate::graph::{serialize, CompositeModel};
use crate::io::SearchConfig;
use crate::tasks::{Task, TaskError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("initial population: {0}")]
    Init(TaskError),
    #[error("no initial model could be evaluated")]
    NothingEvaluated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierMember {
    pub objectives: Vec<f64>,
    pub model: CompositeModel,
    pub text: String,
}

/// Mutually non-dominated models, ordered by objectives.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoFrontier {
    pub members: Vec<FrontierMember>,
}

impl ParetoFrontier {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.objectives.clone()).collect()
    }

    fn from_population(pop: &Population) -> Self {
        let mut seen = BTreeSet::new();
        let mut members: Vec<FrontierMember> = pop
            .individuals
            .iter()
            .filter(|i| i.level == 0)
            .filter_map(|i| {
                // node ids differ between structurally equal models
                let text = serialize(&i.model);
                seen.insert(i.model.canonical()).then(|| FrontierMember {
                    objectives: i.objectives.clone(),
                    model: i.model.clone(),
                    text,
                })
            })
            .collect();
        members.sort_by(|a, b| {
            a.objectives
                .iter()
                .zip(&b.objectives)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.text.cmp(&b.text))
        });
        debug_assert!(members
            .iter()
            .all(|a| members.iter().all(|b| !dominates(&a.objectives, &b.objectives))));
        ParetoFrontier { members }
    }
}

/// Snapshot handed to the observer after initialisation (epoch 0) and after
/// every epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub front: Vec<Vec<f64>>,
    pub ideal: Vec<f64>,
    pub population: usize,
}

/// Worst finite value seen per objective; failed evaluations score 10% above it.
struct Penalty {
    worst: Vec<f64>,
}

impl Penalty {
    fn observe(&mut self, f: &[f64]) {
        for (w, v) in self.worst.iter_mut().zip(f) {
            if v.is_finite() && *v > *w {
                *w = *v;
            }
        }
    }

    fn vector(&self) -> Vec<f64> {
        self.worst
            .iter()
            .map(|w| if w.is_finite() { w + 0.1 * w.abs().max(1e-12) } else { 1e12 })
            .collect()
    }
}

fn evaluate(task: &dyn Task, model: &CompositeModel, seed: u64) -> Option<(CompositeModel, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task.evaluate(model, &mut rng) {
        Ok((m, f)) if f.iter().all(|v| v.is_finite()) => Some((m, f)),
        Ok(_) => None,
        Err(e) => {
            debug!("evaluation failed: {e}");
            None
        }
    }
}

pub fn run(task: &dyn Task, config: &SearchConfig) -> Result<ParetoFrontier, RunError> {
    run_with(task, config, &[], |_| {})
}

/// Full search. `initial` models seed the population before random ones;
/// `observer` sees the level-0 front after initialisation and each epoch.
pub fn run_with<O: FnMut(&EpochStats)>(
    task: &dyn Task,
    config: &SearchConfig,
    initial: &[CompositeModel],
    mut observer: O,
) -> Result<ParetoFrontier, RunError> {
    let m = task.objective_names().len();
    let mut lattice = WeightLattice::new(m, config.h, config.k)?;
    let capacity = if config.n == 0 { 2 * lattice.len() } else { config.n };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut penalty = Penalty { worst: vec![f64::NEG_INFINITY; m] };

    let mut evaluated: Vec<(CompositeModel, Option<Vec<f64>>)> = Vec::with_capacity(capacity);
    for i in 0..capacity {
        let model = match initial.get(i) {
            Some(m) => m.clone(),
            None => task.random_model(&mut rng).map_err(RunError::Init)?,
        };
        let seed = rng.next_u64();
        match evaluate(task, &model, seed) {
            Some((fitted, f)) => {
                penalty.observe(&f);
                evaluated.push((fitted, Some(f)));
            }
            None => evaluated.push((model, None)),
        }
    }
    if evaluated.iter().all(|(_, f)| f.is_none()) {
        return Err(RunError::NothingEvaluated);
    }
    let mut pop = Population::new(capacity);
    for (model, f) in evaluated {
        let f = f.unwrap_or_else(|| penalty.vector());
        lattice.update_ideal(&f);
        pop.individuals.push(Individual::new(model, f, 0));
    }
    pop.reassociate(&lattice);
    pop.relevel();
    let snapshot = |epoch: usize, pop: &Population, lattice: &WeightLattice| EpochStats {
        epoch,
        front: pop.individuals.iter().filter(|i| i.level == 0).map(|i| i.objectives.clone()).collect(),
        ideal: lattice.ideal.clone(),
        population: pop.len(),
    };
    observer(&snapshot(0, &pop, &lattice));

    for epoch in 1..=config.epochs {
        for w in 0..lattice.len() {
            let (a, b) = select_parents(&lattice, &pop, w, config.delta, &mut rng);
            let (pa, pb) = (pop.individuals[a].model.clone(), pop.individuals[b].model.clone());
            let (ca, cb) = task.vary(&pa, &pb, &mut rng);
            for (child, parent) in [(ca, &pa), (cb, &pb)] {
                let child = if task.conforms(&child) { child } else { parent.clone() };
                let seed = rng.next_u64();
                let (model, f) = match evaluate(task, &child, seed) {
                    Some((fitted, f)) => {
                        penalty.observe(&f);
                        (fitted, f)
                    }
                    None => (child, penalty.vector()),
                };
                if lattice.update_ideal(&f) {
                    pop.reassociate(&lattice);
                }
                update_population(&mut pop, Individual::new(model, f, epoch), &lattice, config.theta);
            }
        }
        let stats = snapshot(epoch, &pop, &lattice);
        info!("epoch {epoch}: {} front members, ideal {:?}", stats.front.len(), stats.ideal);
        observer(&stats);
    }
    let objs: Vec<Vec<f64>> = pop.individuals.iter().map(|i| i.objectives.clone()).collect();
    debug_assert!(nondominated_sort(&objs).is_ok());
    Ok(ParetoFrontier::from_population(&pop))
}
