use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use thiserror::Error;

use super::{CompositeModel, NodeId, PortKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    MissingOutput(NodeId),
    DanglingInput { node: NodeId, parent: NodeId },
    Cycle(Vec<NodeId>),
    Arity { node: NodeId, found: usize },
    SignatureMismatch { node: NodeId, port: usize, expected: PortKind, found: PortKind },
    Orphan(NodeId),
    TooManyNodes { count: usize, max: usize },
    DepthExceeded { depth: usize, budget: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingOutput(id) => write!(f, "output node {id} does not exist"),
            Violation::DanglingInput { node, parent } => {
                write!(f, "node {node} reads from missing node {parent}")
            }
            Violation::Cycle(ids) => write!(f, "cycle through nodes {ids:?}"),
            Violation::Arity { node, found } => {
                write!(f, "arity mismatch at node {node}: {found} inputs")
            }
            Violation::SignatureMismatch { node, port, expected, found } => write!(
                f,
                "signature mismatch at node {node}: port {port} expects {expected:?}, got {found:?}"
            ),
            Violation::Orphan(id) => write!(f, "orphan node {id} does not reach the output"),
            Violation::TooManyNodes { count, max } => {
                write!(f, "{count} nodes exceed the limit of {max}")
            }
            Violation::DepthExceeded { depth, budget } => {
                write!(f, "depth {depth} exceeds the budget of {budget}")
            }
        }
    }
}

impl Violation {
    /// Node ids named by the violation.
    pub fn nodes(&self) -> Vec<NodeId> {
        match self {
            Violation::MissingOutput(id) | Violation::Orphan(id) => vec![*id],
            Violation::DanglingInput { node, .. }
            | Violation::Arity { node, .. }
            | Violation::SignatureMismatch { node, .. } => vec![*node],
            Violation::Cycle(ids) => ids.clone(),
            Violation::TooManyNodes { .. } | Violation::DepthExceeded { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return f.write_str("ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("graph contains a cycle through nodes {0:?}")]
pub struct CycleError(pub Vec<NodeId>);

/// Checks every structural invariant of a composite model.
pub fn validate(model: &CompositeModel) -> ValidationReport {
    let mut violations = Vec::new();
    if model.node(model.output()).is_none() {
        violations.push(Violation::MissingOutput(model.output()));
    }
    for (id, node) in model.nodes() {
        let sig = node.atom.signature();
        for p in &node.inputs {
            if model.node(*p).is_none() {
                violations.push(Violation::DanglingInput { node: id, parent: *p });
            }
        }
        if !sig.arity.admits(node.inputs.len()) {
            violations.push(Violation::Arity { node: id, found: node.inputs.len() });
            continue;
        }
        for (port, (p, expected)) in node
            .inputs
            .iter()
            .zip(sig.input_kinds(node.inputs.len()))
            .enumerate()
        {
            if let Some(parent) = model.node(*p) {
                let found = parent.atom.signature().output_kind;
                if found != expected {
                    violations.push(Violation::SignatureMismatch { node: id, port, expected, found });
                }
            }
        }
    }
    let acyclic = match topological_order(model) {
        Ok(_) => true,
        Err(CycleError(ids)) => {
            violations.push(Violation::Cycle(ids));
            false
        }
    };
    if model.node(model.output()).is_some() {
        let reach = model.reachable();
        for id in model.ids() {
            if !reach.contains(&id) {
                violations.push(Violation::Orphan(id));
            }
        }
    }
    if model.len() > model.max_nodes {
        violations.push(Violation::TooManyNodes { count: model.len(), max: model.max_nodes });
    }
    if acyclic && model.node(model.output()).is_some() {
        if let Some(depth) = model.depth() {
            if depth > model.depth_budget {
                violations.push(Violation::DepthExceeded { depth, budget: model.depth_budget });
            }
        }
    }
    ValidationReport { violations }
}

/// Parents-first order, ties broken by ascending node id.
pub fn topological_order(model: &CompositeModel) -> Result<Vec<NodeId>, CycleError> {
    let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (id, node) in model.nodes() {
        indegree.entry(id).or_insert(0);
        for p in &node.inputs {
            if model.node(*p).is_some() {
                *indegree.entry(id).or_insert(0) += 1;
                children.entry(*p).or_default().push(id);
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<NodeId>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| Reverse(*id))
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(Reverse(id)) = ready.pop() {
        order.push(id);
        for c in children.get(&id).into_iter().flatten() {
            let d = indegree.get_mut(c).expect("known node");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(*c));
            }
        }
    }
    if order.len() < indegree.len() {
        let stuck = indegree.into_iter().filter(|(_, d)| *d > 0).map(|(id, _)| id).collect();
        return Err(CycleError(stuck));
    }
    Ok(order)
}
