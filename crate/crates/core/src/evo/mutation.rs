use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

use super::OpWarning;
use crate::atoms::AtomRegistry;
use crate::graph::{random_subtree, CompositeModel, NodeId};

/// Replaces each mutable node, independently with probability `p_node`, by a
/// fresh atom of another kind with the same signature. Inputs and ids are kept.
pub fn mutate_node(
    model: &CompositeModel,
    registry: &AtomRegistry,
    rng: &mut dyn RngCore,
    p_node: f64,
) -> (CompositeModel, Vec<OpWarning>) {
    let mut out = model.clone();
    let mut warnings = Vec::new();
    for id in model.mutable_ids() {
        if !rng.random_bool(p_node.clamp(0.0, 1.0)) {
            continue;
        }
        let kind = out.node(id).expect("listed node").atom.kind;
        let options = registry.replacements(kind);
        let Some(&new_kind) = options.choose(rng) else {
            warnings.push(OpWarning::NoReplacement { node: id, kind });
            continue;
        };
        let atom = registry.fresh(new_kind, rng).expect("replacement is registered");
        out.node_mut(id).expect("listed node").atom = atom;
    }
    (out, warnings)
}

/// Nodes reachable from the output once `id` is cut out, excluding `id`.
fn remaining_after_detach(model: &CompositeModel, id: NodeId) -> usize {
    if id == model.output() {
        return 0;
    }
    let mut cut = model.clone();
    cut.remove_node(id);
    let reach = cut.reachable();
    reach.len() - usize::from(reach.contains(&id))
}

/// With probability `p_tree`, replaces one mutable node (uniformly chosen
/// among those whose subtree holds no immutable node) by a random subtree of
/// the same output kind built from mutable atoms, within the depth and node
/// budgets.
pub fn mutate_subtree(
    model: &CompositeModel,
    registry: &AtomRegistry,
    rng: &mut dyn RngCore,
    p_tree: f64,
) -> (CompositeModel, Vec<OpWarning>) {
    if !rng.random_bool(p_tree.clamp(0.0, 1.0)) {
        return (model.clone(), Vec::new());
    }
    let Some(depths) = model.depths() else {
        return (model.clone(), Vec::new());
    };
    let candidates: Vec<NodeId> = model
        .mutable_ids()
        .into_iter()
        .filter(|id| depths.contains_key(id))
        .filter(|id| {
            model
                .subtree(*id)
                .iter()
                .all(|n| model.node(*n).is_some_and(|node| node.atom.mutable))
        })
        .collect();
    let Some(&target) = candidates.choose(rng) else {
        return (model.clone(), Vec::new());
    };
    let port = model.node(target).expect("candidate exists").atom.signature().output_kind;
    let depth_left = (model.depth_budget + 1).saturating_sub(depths[&target]);
    let budget = model.max_nodes.saturating_sub(remaining_after_detach(model, target));
    let mut out = model.clone();
    match random_subtree(&mut out, registry, port, depth_left, budget, true, rng) {
        Some(root) => {
            out.redirect(target, root);
            out.remove_orphans();
            (out, Vec::new())
        }
        None => (model.clone(), vec![OpWarning::Budget { node: target }]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{AtomInstance, AtomKind};
    use crate::evo::immutable_multiset;
    use crate::graph::{serialize, validate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn registry() -> AtomRegistry {
        let mut r = AtomRegistry::new();
        r.register(AtomKind::Sin, true, |rng| AtomInstance::sin(rng.random_range(0.1..3.0), 0.0, 1.0))
            .unwrap();
        r.register(AtomKind::Poly, true, |rng| AtomInstance::poly(rng.random_range(0.0..3.0), 1.0))
            .unwrap();
        r.register(AtomKind::Pulse, true, |_| AtomInstance::pulse(0.0, 1.0, 1.0)).unwrap();
        r.register(AtomKind::Sum, false, |_| AtomInstance::sum()).unwrap();
        r.register(AtomKind::Product, false, |_| AtomInstance::product()).unwrap();
        r
    }

    fn sum_of_leaves(n: usize) -> CompositeModel {
        let mut m = CompositeModel::new(4, 16);
        let leaves: Vec<NodeId> = (0..n).map(|i| m.add_node(AtomInstance::sin(1.0 + i as f64, 0.0, 1.0), vec![])).collect();
        let s = m.add_node(AtomInstance::sum(), leaves);
        m.set_output(s);
        m
    }

    #[test]
    fn zero_probability_is_identity() {
        let m = sum_of_leaves(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(mutate_node(&m, &registry(), &mut rng, 0.0).0, m);
        assert_eq!(mutate_subtree(&m, &registry(), &mut rng, 0.0).0, m);
    }

    #[test]
    fn leaf_changes_family_sum_untouched() {
        let m = sum_of_leaves(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, w) = mutate_node(&m, &registry(), &mut rng, 1.0);
        assert!(w.is_empty());
        let leaf = out.node(NodeId(0)).unwrap();
        assert_ne!(leaf.atom.kind, AtomKind::Sin);
        assert_eq!(out.node(NodeId(1)), m.node(NodeId(1)));
    }

    #[test]
    fn replacement_rate_is_binomial() {
        let m = sum_of_leaves(5);
        let reg = registry();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 10_000;
        let mut replaced = 0usize;
        for _ in 0..trials {
            let (out, _) = mutate_node(&m, &reg, &mut rng, 0.3);
            replaced += m.ids().iter().filter(|id| out.node(**id).unwrap().atom.kind != m.node(**id).unwrap().atom.kind).count();
        }
        let mean = replaced as f64 / trials as f64;
        assert!((mean - 1.5).abs() < 0.1, "{mean}");
    }

    #[test]
    fn single_kind_signature_warns() {
        let mut reg = AtomRegistry::new();
        reg.register(AtomKind::Sin, true, |_| AtomInstance::sin(1.0, 0.0, 1.0)).unwrap();
        let m = CompositeModel::single(AtomInstance::sin(2.0, 0.0, 1.0));
        let (out, w) = mutate_node(&m, &reg, &mut ChaCha8Rng::seed_from_u64(0), 1.0);
        assert_eq!(out, m);
        assert_eq!(w, vec![OpWarning::NoReplacement { node: NodeId(0), kind: AtomKind::Sin }]);
    }

    #[test]
    fn subtree_budget_of_one_gives_leaf() {
        let mut m = sum_of_leaves(3);
        m.max_nodes = 4;
        let reg = registry();
        for seed in 0..50 {
            let (out, _) = mutate_subtree(&m, &reg, &mut ChaCha8Rng::seed_from_u64(seed), 1.0);
            assert!(validate(&out).ok());
            assert_eq!(out.len(), 4);
            assert_eq!(immutable_multiset(&out), immutable_multiset(&m));
        }
    }

    #[test]
    fn subtree_mutation_changes_something() {
        let m = sum_of_leaves(2);
        let reg = registry();
        let changed = (0..20)
            .filter(|s| serialize(&mutate_subtree(&m, &reg, &mut ChaCha8Rng::seed_from_u64(*s), 1.0).0) != serialize(&m))
            .count();
        assert!(changed > 10);
    }
}
