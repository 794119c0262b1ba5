use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

use super::{CompositeModel, NodeId, PortKind, DEFAULT_DEPTH_BUDGET, DEFAULT_MAX_NODES};
use crate::atoms::{AtomKind, AtomRegistry, RegistryError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConstraints {
    pub depth_budget: usize,
    pub max_nodes: usize,
    pub required_output: PortKind,
}

impl ModelConstraints {
    pub fn new(required_output: PortKind) -> Self {
        ModelConstraints {
            depth_budget: DEFAULT_DEPTH_BUDGET,
            max_nodes: DEFAULT_MAX_NODES,
            required_output,
        }
    }
}

/// Smallest node count able to produce each port kind within each depth.
struct CostTable {
    kinds: Vec<AtomKind>,
    cost: BTreeMap<(PortKind, usize), usize>,
}

impl CostTable {
    fn new(registry: &AtomRegistry, mutable_only: bool, max_depth: usize) -> Self {
        let kinds: Vec<AtomKind> = registry
            .kinds()
            .filter(|k| !mutable_only || registry.is_mutable(*k))
            .collect();
        let mut cost = BTreeMap::new();
        for depth in 1..=max_depth {
            for port in [PortKind::Series, PortKind::FeatureMatrix, PortKind::Scalar] {
                let best = kinds
                    .iter()
                    .filter(|k| k.signature().output_kind == port)
                    .filter_map(|k| Self::atom_cost(&cost, *k, depth))
                    .min();
                if let Some(c) = best {
                    cost.insert((port, depth), c);
                }
            }
        }
        CostTable { kinds, cost }
    }

    fn atom_cost(cost: &BTreeMap<(PortKind, usize), usize>, kind: AtomKind, depth: usize) -> Option<usize> {
        let sig = kind.signature();
        if sig.is_leaf() {
            return Some(1);
        }
        if depth < 2 {
            return None;
        }
        let child = cost.get(&(sig.input_kind?, depth - 1))?;
        Some(1 + sig.arity.min() * child)
    }

    fn get(&self, port: PortKind, depth: usize) -> Option<usize> {
        if depth == 0 {
            return None;
        }
        self.cost.get(&(port, depth)).copied()
    }
}

fn grow(
    model: &mut CompositeModel,
    registry: &AtomRegistry,
    table: &CostTable,
    port: PortKind,
    depth: usize,
    budget: usize,
    rng: &mut dyn RngCore,
) -> Result<(NodeId, usize), RegistryError> {
    let candidates: Vec<AtomKind> = table
        .kinds
        .iter()
        .copied()
        .filter(|k| k.signature().output_kind == port)
        .filter(|k| CostTable::atom_cost(&table.cost, *k, depth).is_some_and(|c| c <= budget))
        .collect();
    let kind = *candidates.choose(rng).ok_or(RegistryError::NoProducer(port))?;
    let sig = kind.signature();
    let atom = registry.fresh(kind, rng)?;
    if sig.is_leaf() {
        return Ok((model.add_node(atom, Vec::new()), 1));
    }
    let child_port = sig.input_kind.expect("non-leaf has inputs");
    let child_cost = table.get(child_port, depth - 1).expect("feasible child");
    let max_arity = (sig.arity.min()..=sig.arity.max())
        .filter(|n| n * child_cost < budget)
        .max()
        .unwrap_or(sig.arity.min());
    let arity = rng.random_range(sig.arity.min()..=max_arity);
    let mut used = 1;
    let mut inputs = Vec::with_capacity(arity);
    for i in 0..arity {
        let reserve = (arity - i - 1) * child_cost;
        let (child, n) = grow(model, registry, table, child_port, depth - 1, budget - used - reserve, rng)?;
        used += n;
        inputs.push(child);
    }
    Ok((model.add_node(atom, inputs), used))
}

/// Random valid model drawn from the whole registry. Generated models are
/// trees; fan-out only arises from later edits.
pub fn random_model(
    registry: &AtomRegistry,
    constraints: &ModelConstraints,
    rng: &mut dyn RngCore,
) -> Result<CompositeModel, RegistryError> {
    let table = CostTable::new(registry, false, constraints.depth_budget.max(1));
    if table.get(constraints.required_output, constraints.depth_budget.max(1)).is_none() {
        return Err(RegistryError::NoProducer(constraints.required_output));
    }
    let mut model = CompositeModel::new(constraints.depth_budget, constraints.max_nodes);
    let (root, _) = grow(
        &mut model,
        registry,
        &table,
        constraints.required_output,
        constraints.depth_budget.max(1),
        constraints.max_nodes.max(1),
        rng,
    )?;
    model.set_output(root);
    Ok(model)
}

/// Grows a random subtree inside `model` and returns its root. Only mutable
/// registry kinds are used when `mutable_only` is set. `None` when nothing of
/// kind `port` fits in `depth` levels and `budget` nodes.
pub fn random_subtree(
    model: &mut CompositeModel,
    registry: &AtomRegistry,
    port: PortKind,
    depth: usize,
    budget: usize,
    mutable_only: bool,
    rng: &mut dyn RngCore,
) -> Option<NodeId> {
    if depth == 0 || budget == 0 {
        return None;
    }
    let table = CostTable::new(registry, mutable_only, depth);
    if table.get(port, depth).is_none_or(|c| c > budget) {
        return None;
    }
    grow(model, registry, &table, port, depth, budget, rng).ok().map(|(id, _)| id)
}
