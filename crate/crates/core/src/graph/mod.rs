//! Composite models as directed acyclic graphs of atomic models.

mod eval;
mod random;
mod text;
mod validate;

pub use eval::{evaluate, evaluate_all, evaluate_traced, EvalError};
pub use random::{random_model, random_subtree, ModelConstraints};
pub use text::{parse, serialize, ParseError};
pub use validate::{topological_order, validate, CycleError, ValidationReport, Violation};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::atoms::AtomInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PortKind {
    Series,
    FeatureMatrix,
    Scalar,
}

/// Row-major real matrix. `offset` is the grid index of the time step that
/// row 0 refers to, so matrices derived from one series can be aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(offset: usize, rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        FeatureMatrix {
            offset,
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(offset: usize, values: Vec<f64>) -> Self {
        FeatureMatrix {
            offset,
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Rows `start..end` as a new matrix (offset shifted accordingly).
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        FeatureMatrix {
            offset: self.offset + start,
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PortValue {
    Series(Vec<f64>),
    Matrix(FeatureMatrix),
    Scalar(f64),
}

impl PortValue {
    pub fn kind(&self) -> PortKind {
        match self {
            PortValue::Series(_) => PortKind::Series,
            PortValue::Matrix(_) => PortKind::FeatureMatrix,
            PortValue::Scalar(_) => PortKind::Scalar,
        }
    }

    pub fn as_series(&self) -> Option<&[f64]> {
        match self {
            PortValue::Series(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&FeatureMatrix> {
        match self {
            PortValue::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            PortValue::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    /// Same shape, every sample replaced by its (column) mean.
    pub fn mean_ablated(&self) -> PortValue {
        match self {
            PortValue::Series(s) => {
                let m = s.iter().sum::<f64>() / s.len().max(1) as f64;
                PortValue::Series(vec![m; s.len()])
            }
            PortValue::Matrix(mat) => {
                let means: Vec<f64> = (0..mat.cols)
                    .map(|j| mat.col(j).iter().sum::<f64>() / mat.rows.max(1) as f64)
                    .collect();
                let mut out = mat.clone();
                for i in 0..mat.rows {
                    for (j, m) in means.iter().enumerate() {
                        out.data[i * mat.cols + j] = *m;
                    }
                }
                PortValue::Matrix(out)
            }
            PortValue::Scalar(x) => PortValue::Scalar(*x),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            PortValue::Series(s) => s.iter().all(|v| v.is_finite()),
            PortValue::Matrix(m) => m.data.iter().all(|v| v.is_finite()),
            PortValue::Scalar(x) => x.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub atom: AtomInstance,
    /// Data-flow parents, in input-port order.
    pub inputs: Vec<NodeId>,
}

pub const DEFAULT_DEPTH_BUDGET: usize = 4;
pub const DEFAULT_MAX_NODES: usize = 16;

/// The genome: a DAG of atom instances with a single output node.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeModel {
    nodes: BTreeMap<NodeId, Node>,
    output: NodeId,
    next_id: u32,
    pub depth_budget: usize,
    pub max_nodes: usize,
}

impl CompositeModel {
    pub fn new(depth_budget: usize, max_nodes: usize) -> Self {
        CompositeModel {
            nodes: BTreeMap::new(),
            output: NodeId(0),
            next_id: 0,
            depth_budget,
            max_nodes,
        }
    }

    /// A one-node model with default budgets.
    pub fn single(atom: AtomInstance) -> Self {
        let mut m = CompositeModel::new(DEFAULT_DEPTH_BUDGET, DEFAULT_MAX_NODES);
        let id = m.add_node(atom, Vec::new());
        m.set_output(id);
        m
    }

    /// Adds a node under a fresh id. Ids are never reused within a model.
    pub fn add_node(&mut self, atom: AtomInstance, inputs: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(id, Node { atom, inputs });
        id
    }

    pub(crate) fn insert_raw(&mut self, id: NodeId, node: Node) {
        self.next_id = self.next_id.max(id.0 + 1);
        self.nodes.insert(id, node);
    }

    pub(crate) fn set_next_id(&mut self, next: u32) {
        self.next_id = next;
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = id;
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn remove_node(&mut self, id: NodeId) -> Option<Node> {
        self.nodes.remove(&id)
    }

    /// Nodes consuming `id`, with the input position used.
    pub fn consumers(&self, id: NodeId) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        for (nid, node) in &self.nodes {
            for (pos, p) in node.inputs.iter().enumerate() {
                if *p == id {
                    out.push((*nid, pos));
                }
            }
        }
        out
    }

    /// `id` and every node it (transitively) depends on.
    pub fn subtree(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(node) = self.nodes.get(&n) {
                stack.extend(node.inputs.iter().copied());
            }
        }
        seen
    }

    /// Nodes from which the output is reachable.
    pub fn reachable(&self) -> BTreeSet<NodeId> {
        if self.nodes.contains_key(&self.output) {
            self.subtree(self.output)
        } else {
            BTreeSet::new()
        }
    }

    /// Drops nodes not feeding the output. Returns how many were removed.
    pub fn remove_orphans(&mut self) -> usize {
        let keep = self.reachable();
        let before = self.nodes.len();
        self.nodes.retain(|id, _| keep.contains(id));
        before - self.nodes.len()
    }

    /// Depth of every reachable node, the output being depth 1 and a node's
    /// depth being its longest path to the output. `None` on cycles.
    pub fn depths(&self) -> Option<BTreeMap<NodeId, usize>> {
        let order = topological_order(self).ok()?;
        let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
        depth.insert(self.output, 1);
        for id in order.iter().rev() {
            let Some(&d) = depth.get(id) else { continue };
            if let Some(node) = self.nodes.get(id) {
                for p in &node.inputs {
                    let e = depth.entry(*p).or_insert(0);
                    *e = (*e).max(d + 1);
                }
            }
        }
        Some(depth)
    }

    /// Longest output-to-leaf path in nodes.
    pub fn depth(&self) -> Option<usize> {
        self.depths().map(|d| d.values().copied().max().unwrap_or(0))
    }

    /// Height of the subtree rooted at `id` (a leaf has height 1).
    pub fn height(&self, id: NodeId) -> usize {
        fn go(m: &CompositeModel, id: NodeId, guard: usize) -> usize {
            if guard == 0 {
                return usize::MAX / 2;
            }
            match m.nodes.get(&id) {
                Some(n) => 1 + n.inputs.iter().map(|p| go(m, *p, guard - 1)).max().unwrap_or(0),
                None => 0,
            }
        }
        go(self, id, self.nodes.len() + 1)
    }

    pub fn mutable_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.atom.mutable)
            .map(|(id, _)| *id)
            .collect()
    }

    /// Rewires every consumer of `old` to read from `new`.
    pub fn redirect(&mut self, old: NodeId, new: NodeId) {
        for node in self.nodes.values_mut() {
            for p in node.inputs.iter_mut() {
                if *p == old {
                    *p = new;
                }
            }
        }
        if self.output == old {
            self.output = new;
        }
    }

    /// Copies the subtree of `src` rooted at `root` into `self` under fresh
    /// ids and returns the id of the copied root.
    pub fn graft(&mut self, src: &CompositeModel, root: NodeId) -> NodeId {
        let members = src.subtree(root);
        let order = topological_order(src).unwrap_or_default();
        let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for id in order.into_iter().filter(|id| members.contains(id)) {
            let node = src.node(id).expect("member of subtree");
            let inputs = node.inputs.iter().map(|p| map[p]).collect();
            let new_id = self.add_node(node.atom.clone(), inputs);
            map.insert(id, new_id);
        }
        map[&root]
    }

    /// Id-independent structural text of the reachable graph; equal for
    /// models that differ only in node numbering.
    pub fn canonical(&self) -> String {
        fn go(m: &CompositeModel, id: NodeId, out: &mut String) {
            let Some(node) = m.nodes.get(&id) else {
                out.push('?');
                return;
            };
            let a = &node.atom;
            out.push_str(&a.kind.name());
            if !a.mutable {
                out.push('!');
            }
            if !a.hyper.is_empty() {
                out.push_str(&format!("{:?}", a.hyper));
            }
            if !a.params.is_empty() {
                out.push_str(&format!("{:?}", a.params));
            }
            if !node.inputs.is_empty() {
                out.push('(');
                for (i, p) in node.inputs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    go(m, *p, out);
                }
                out.push(')');
            }
        }
        let mut out = String::new();
        go(self, self.output, &mut out);
        out
    }
}
