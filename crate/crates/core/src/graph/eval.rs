use std::collections::BTreeMap;

use thiserror::Error;

use super::{topological_order, validate, CompositeModel, NodeId, PortValue};
use crate::atoms::{apply_atom, AtomError};
use crate::io::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("dataset needs at least 2 samples")]
    TooFewSamples,
    #[error("node {node} ({kind}) failed: {source}")]
    Atom {
        node: NodeId,
        kind: String,
        #[source]
        source: AtomError,
    },
    #[error("node {0} produced non-finite values")]
    NonFinite(NodeId),
}

impl EvalError {
    pub fn node(&self) -> Option<NodeId> {
        match self {
            EvalError::Atom { node, .. } | EvalError::NonFinite(node) => Some(*node),
            _ => None,
        }
    }
}

/// Output of the model's output node.
pub fn evaluate(model: &CompositeModel, data: &Dataset) -> Result<PortValue, EvalError> {
    let mut all = evaluate_all(model, data, &BTreeMap::new())?;
    Ok(all.remove(&model.output()).expect("output evaluated"))
}

/// Every node's output, computed once each in topological order.
/// `overrides` replace a node's computed output before its consumers run.
pub fn evaluate_all(
    model: &CompositeModel,
    data: &Dataset,
    overrides: &BTreeMap<NodeId, PortValue>,
) -> Result<BTreeMap<NodeId, PortValue>, EvalError> {
    evaluate_traced(model, data, overrides, |_| {})
}

/// [`evaluate_all`] with a callback invoked on each atom application.
pub fn evaluate_traced<F: FnMut(NodeId)>(
    model: &CompositeModel,
    data: &Dataset,
    overrides: &BTreeMap<NodeId, PortValue>,
    mut on_apply: F,
) -> Result<BTreeMap<NodeId, PortValue>, EvalError> {
    let report = validate(model);
    if !report.ok() {
        return Err(EvalError::Invalid(report.to_string()));
    }
    if data.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let order = topological_order(model).map_err(|e| EvalError::Invalid(e.to_string()))?;
    let mut values: BTreeMap<NodeId, PortValue> = BTreeMap::new();
    for id in order {
        let node = model.node(id).expect("ordered node exists");
        let value = match overrides.get(&id) {
            Some(v) => v.clone(),
            None => {
                let inputs: Vec<PortValue> = node.inputs.iter().map(|p| values[p].clone()).collect();
                on_apply(id);
                let v = apply_atom(&node.atom, &inputs, data).map_err(|source| EvalError::Atom {
                    node: id,
                    kind: node.atom.kind.name(),
                    source,
                })?;
                if !v.is_finite() {
                    return Err(EvalError::NonFinite(id));
                }
                v
            }
        };
        values.insert(id, value);
    }
    Ok(values)
}
