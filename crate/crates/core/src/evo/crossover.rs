use rand::seq::IndexedRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{CompositeModel, NodeId};

pub const CROSSOVER_ATTEMPTS: usize = 20;

/// Exchanges one subtree between the parents. Draws one seed per parent and
/// delegates to [`crossover_seeded`].
pub fn crossover(a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel) {
    let (sa, sb) = (rng.next_u64(), rng.next_u64());
    crossover_seeded(a, b, sa, sb)
}

/// Crossover points are mutable non-output nodes, sampled independently per
/// parent from its own seed; a pair is accepted when the root output kinds
/// match and both children respect their budgets. After
/// [`CROSSOVER_ATTEMPTS`] rejected pairs the parents are returned unchanged.
///
/// Swapping the parents together with their seeds swaps the children.
pub fn crossover_seeded(a: &CompositeModel, b: &CompositeModel, seed_a: u64, seed_b: u64) -> (CompositeModel, CompositeModel) {
    let (mut ra, mut rb) = (ChaCha8Rng::seed_from_u64(seed_a), ChaCha8Rng::seed_from_u64(seed_b));
    let points = |m: &CompositeModel| -> Vec<NodeId> {
        let reach = m.reachable();
        m.mutable_ids().into_iter().filter(|id| *id != m.output() && reach.contains(id)).collect()
    };
    let (pa, pb) = (points(a), points(b));
    if pa.is_empty() || pb.is_empty() {
        return (a.clone(), b.clone());
    }
    for _ in 0..CROSSOVER_ATTEMPTS {
        let xa = *pa.choose(&mut ra).expect("non-empty");
        let xb = *pb.choose(&mut rb).expect("non-empty");
        let ka = a.node(xa).expect("point exists").atom.signature().output_kind;
        let kb = b.node(xb).expect("point exists").atom.signature().output_kind;
        if ka != kb {
            continue;
        }
        let ca = transplant(a, xa, b, xb);
        let cb = transplant(b, xb, a, xa);
        if within_budget(&ca) && within_budget(&cb) {
            return (ca, cb);
        }
    }
    (a.clone(), b.clone())
}

/// `host` with the subtree at `at` replaced by a copy of `donor`'s subtree at `root`.
fn transplant(host: &CompositeModel, at: NodeId, donor: &CompositeModel, root: NodeId) -> CompositeModel {
    let mut child = host.clone();
    let new_root = child.graft(donor, root);
    child.redirect(at, new_root);
    child.remove_orphans();
    child
}

fn within_budget(m: &CompositeModel) -> bool {
    m.len() <= m.max_nodes && m.depth().is_some_and(|d| d <= m.depth_budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{AtomInstance, AtomKind};
    use crate::graph::{serialize, validate};

    fn model(freqs: &[f64]) -> CompositeModel {
        let mut m = CompositeModel::new(4, 16);
        let leaves: Vec<NodeId> = freqs.iter().map(|f| m.add_node(AtomInstance::sin(*f, 0.0, 1.0), vec![])).collect();
        let s = m.add_node(AtomInstance::sum(), leaves);
        m.set_output(s);
        m
    }

    #[test]
    fn identical_parents_same_point_give_parents() {
        let m = model(&[1.0]);
        let (a, b) = crossover_seeded(&m, &m, 5, 5);
        assert!(validate(&a).ok() && validate(&b).ok());
        assert_eq!(a.canonical(), m.canonical());
        assert_eq!(b.canonical(), m.canonical());
    }

    #[test]
    fn mirrored_seeds_swap_children() {
        let a = model(&[1.0, 2.0, 3.0]);
        let b = model(&[4.0, 5.0]);
        for s in 0..30u64 {
            let (x, y) = crossover_seeded(&a, &b, s, s + 100);
            let (y2, x2) = crossover_seeded(&b, &a, s + 100, s);
            assert_eq!((serialize(&x), serialize(&y)), (serialize(&x2), serialize(&y2)));
        }
    }

    #[test]
    fn incompatible_kinds_fall_back_to_clones() {
        let a = model(&[1.0]);
        let mut b = CompositeModel::new(4, 16);
        let lag = b.add_node(AtomInstance::lag(3), vec![]);
        let r = b.add_node(AtomInstance::new(AtomKind::Ridge, vec![]), vec![lag]);
        b.set_output(r);
        let (x, y) = crossover_seeded(&a, &b, 1, 2);
        assert_eq!((x, y), (a, b));
    }
}
