use rand::{Rng, RngCore};

use super::lattice::{pbi, WeightLattice};
use super::sort::nondominated_sort;
use crate::graph::CompositeModel;

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub model: CompositeModel,
    pub objectives: Vec<f64>,
    pub level: usize,
    pub subregion: usize,
    /// Epoch in which the individual was created.
    pub age: usize,
}

impl Individual {
    pub fn new(model: CompositeModel, objectives: Vec<f64>, age: usize) -> Self {
        Individual { model, objectives, level: 0, subregion: 0, age }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub capacity: usize,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        Population { individuals: Vec::new(), capacity }
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// Re-associates every individual with the lattice's current ideal point.
    pub fn reassociate(&mut self, lattice: &WeightLattice) {
        for ind in &mut self.individuals {
            ind.subregion = lattice.associate(&ind.objectives);
        }
    }

    /// Recomputes domination levels.
    pub fn relevel(&mut self) {
        let objs: Vec<Vec<f64>> = self.individuals.iter().map(|i| i.objectives.clone()).collect();
        if let Ok(levels) = nondominated_sort(&objs) {
            for (l, members) in levels.iter().enumerate() {
                for &i in members {
                    self.individuals[i].level = l;
                }
            }
        }
    }

    /// Indices of individuals in subregion `w`.
    pub fn members_of(&self, w: usize) -> Vec<usize> {
        (0..self.len()).filter(|i| self.individuals[*i].subregion == w).collect()
    }
}

/// Two distinct population indices (equal only for a population of one).
/// With probability `delta` they come from the subregions in the
/// neighbourhood of weight `w`, if that pool has at least two members.
pub fn select_parents(
    lattice: &WeightLattice,
    population: &Population,
    w: usize,
    delta: f64,
    rng: &mut dyn RngCore,
) -> (usize, usize) {
    let n = population.len();
    assert!(n > 0, "cannot select parents from an empty population");
    let mut pool: Vec<usize> = Vec::new();
    if rng.random_bool(delta.clamp(0.0, 1.0)) {
        let hood = &lattice.neighborhoods[w];
        pool = (0..n).filter(|i| hood.contains(&population.individuals[*i].subregion)).collect();
    }
    if pool.len() < 2 {
        pool = (0..n).collect();
    }
    if pool.len() == 1 {
        return (pool[0], pool[0]);
    }
    let a = rng.random_range(0..pool.len());
    let mut b = rng.random_range(0..pool.len() - 1);
    if b >= a {
        b += 1;
    }
    (pool[a], pool[b])
}

fn pbi_of(ind: &Individual, lattice: &WeightLattice, theta: f64) -> f64 {
    pbi(&ind.objectives, &lattice.weights[ind.subregion], &lattice.ideal, theta).unwrap_or(f64::INFINITY)
}

/// Among `candidates`, the subregion with the most members in the whole
/// population (ties: larger summed PBI, then lower index).
fn most_crowded(pop: &Population, candidates: &[usize], lattice: &WeightLattice, theta: f64) -> usize {
    let mut regions: Vec<usize> = candidates.iter().map(|i| pop.individuals[*i].subregion).collect();
    regions.sort_unstable();
    regions.dedup();
    let score = |r: usize| {
        let members = pop.members_of(r);
        let sum: f64 = members.iter().map(|i| pbi_of(&pop.individuals[*i], lattice, theta)).sum();
        (members.len(), sum)
    };
    let mut best = regions[0];
    let mut best_score = score(best);
    for &r in &regions[1..] {
        let s = score(r);
        if s.0 > best_score.0 || (s.0 == best_score.0 && s.1 > best_score.1) {
            best = r;
            best_score = s;
        }
    }
    best
}

/// Inserts `offspring` and, above capacity, removes one individual: the
/// worst-PBI member of the most crowded subregion, taken from the last
/// domination level (or from the whole population if it forms one level).
/// The lattice's ideal point must already include the offspring. Returns
/// the removed individual, if any.
pub fn update_population(
    population: &mut Population,
    offspring: Individual,
    lattice: &WeightLattice,
    theta: f64,
) -> Option<Individual> {
    let mut offspring = offspring;
    offspring.subregion = lattice.associate(&offspring.objectives);
    population.individuals.push(offspring);
    population.relevel();
    if population.len() <= population.capacity {
        return None;
    }
    let last = population.individuals.iter().map(|i| i.level).max().unwrap_or(0);
    let candidates: Vec<usize> = (0..population.len()).filter(|i| population.individuals[*i].level == last).collect();
    let region = most_crowded(population, &candidates, lattice, theta);
    let victim = candidates
        .iter()
        .copied()
        .filter(|i| population.individuals[*i].subregion == region)
        .fold(None, |acc: Option<(usize, f64)>, i| {
            let v = pbi_of(&population.individuals[i], lattice, theta);
            match acc {
                Some((_, best)) if best >= v => acc,
                _ => Some((i, v)),
            }
        })
        .map(|(i, _)| i)
        .expect("crowded region has a candidate");
    let removed = population.individuals.remove(victim);
    population.relevel();
    Some(removed)
}
