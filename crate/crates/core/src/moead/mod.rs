//! Decomposition-and-dominance multi-objective search over composite models.

mod lattice;
mod population;
mod run;
mod sort;

pub use lattice::{associate, generate_weights, pbi, LatticeError, WeightLattice};
pub use population::{select_parents, update_population, Individual, Population};
pub use run::{run, run_with, EpochStats, FrontierMember, ParetoFrontier, RunError};
pub use sort::{dominates, hypervolume_2d, nondominated_sort, SortError};
