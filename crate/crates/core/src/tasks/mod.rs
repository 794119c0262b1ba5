//! Discovery tasks: which atoms, which structure, which objectives.

mod expr;
mod ml;
mod pde;
mod render;
mod toy;

pub use expr::{build_expr_task, ExprTask};
pub use ml::{build_ml_task, render_pipeline, MlTask};
pub use pde::{build_pde_task, equation_terms, render_pde, EquationParts, PdeTask, PdeTerm};
pub use render::{fmt_sig4, render_equation, render_expression};
pub use toy::ToyTask;

use rand::RngCore;
use thiserror::Error;

use crate::atoms::{AtomError, AtomRegistry, RegistryError};
use crate::evo::{crossover, mutate_node, mutate_subtree, LassoError};
use crate::graph::{CompositeModel, EvalError};
use crate::io::{DataError, OperatorConfig};
use crate::objectives::ObjectiveError;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Lasso(#[from] LassoError),
    #[error("model does not follow the task template: {0}")]
    Template(String),
}

/// What the optimizer needs from a discovery task.
pub trait Task {
    fn name(&self) -> &str;

    fn objective_names(&self) -> Vec<String>;

    fn registry(&self) -> &AtomRegistry;

    fn random_model(&self, rng: &mut dyn RngCore) -> Result<CompositeModel, TaskError>;

    /// Structural check against the task template.
    fn conforms(&self, model: &CompositeModel) -> bool;

    /// Two offspring from two parents.
    fn vary(&self, a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel);

    /// Fits, regularizes and scores a model. Returns the fitted model.
    fn evaluate(&self, model: &CompositeModel, rng: &mut dyn RngCore) -> Result<(CompositeModel, Vec<f64>), TaskError>;

    fn render(&self, model: &CompositeModel) -> String;
}

/// Crossover followed by node and subtree mutation of each child.
pub fn generic_vary(
    a: &CompositeModel,
    b: &CompositeModel,
    registry: &AtomRegistry,
    ops: &OperatorConfig,
    rng: &mut dyn RngCore,
) -> (CompositeModel, CompositeModel) {
    let (ca, cb) = crossover(a, b, rng);
    let mut mutate = |m: CompositeModel| {
        let (m, _) = mutate_node(&m, registry, rng, ops.p_node);
        mutate_subtree(&m, registry, rng, ops.p_tree).0
    };
    let ca = mutate(ca);
    let cb = mutate(cb);
    (ca, cb)
}
