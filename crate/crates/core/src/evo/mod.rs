//! Variation and regularization operators on composite models.

mod crossover;
mod dispersion;
mod lasso;
mod mutation;

pub use crossover::{crossover, crossover_seeded, CROSSOVER_ATTEMPTS};
pub use dispersion::{dispersion_ratio, prunable_nodes, prune_node, r_squared, regularize_dispersion, regularize_with};
pub use lasso::{lambda_max, lasso_fit, lasso_fit_with, LassoError, LassoFit, LassoOptions};
pub use mutation::{mutate_node, mutate_subtree};

use std::collections::BTreeMap;
use std::fmt;

use crate::atoms::AtomKind;
use crate::graph::{CompositeModel, NodeId};

/// Non-fatal operator outcomes; the model is returned unchanged at that site.
#[derive(Clone, Debug, PartialEq)]
pub enum OpWarning {
    /// The node's signature has no other registered mutable atom.
    NoReplacement { node: NodeId, kind: AtomKind },
    /// No subtree fits the remaining depth or node budget.
    Budget { node: NodeId },
}

impl fmt::Display for OpWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpWarning::NoReplacement { node, kind } => {
                write!(f, "no replacement for {kind} at node {node}")
            }
            OpWarning::Budget { node } => write!(f, "no subtree fits the budget at node {node}"),
        }
    }
}

/// Multiset of immutable atom kinds reachable from the output.
pub fn immutable_multiset(model: &CompositeModel) -> BTreeMap<AtomKind, usize> {
    let mut out = BTreeMap::new();
    for id in model.reachable() {
        if let Some(node) = model.node(id) {
            if !node.atom.mutable {
                *out.entry(node.atom.kind).or_insert(0) += 1;
            }
        }
    }
    out
}
