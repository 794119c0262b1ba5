//! Pruning by dispersion ratio: the share of the model's explained variance
//! lost when a node's output is replaced by its sample mean.

use std::collections::BTreeMap;

use crate::graph::{evaluate_all, CompositeModel, EvalError, NodeId, PortValue};
use crate::io::Dataset;

const EPS: f64 = 1e-9;

/// Output series and the matching slice of the observed signal.
fn aligned<'a>(out: &'a PortValue, data: &'a Dataset) -> Option<(Vec<f64>, &'a [f64])> {
    match out {
        PortValue::Series(s) if s.len() == data.u.len() => Some((s.clone(), &data.u)),
        PortValue::Matrix(m) if m.cols >= 1 && m.offset + m.rows <= data.u.len() => {
            Some((m.col(0), &data.u[m.offset..m.offset + m.rows]))
        }
        _ => None,
    }
}

pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len().max(1) as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let sst: f64 = truth.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    if sst <= 0.0 {
        return if sse <= 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - sse / sst
}

fn model_r2(values: &BTreeMap<NodeId, PortValue>, output: NodeId, data: &Dataset) -> Result<f64, EvalError> {
    let (pred, truth) = aligned(&values[&output], data)
        .ok_or_else(|| EvalError::Invalid("output cannot be aligned with the data".into()))?;
    Ok(r_squared(&pred, truth))
}

fn ratio_from(full: f64, ablated: f64) -> f64 {
    ((full - ablated).max(0.0) / full.max(EPS)).clamp(0.0, 1.0)
}

/// Ratio in `[0, 1]` for one non-output node.
pub fn dispersion_ratio(model: &CompositeModel, node: NodeId, data: &Dataset) -> Result<f64, EvalError> {
    if node == model.output() {
        return Err(EvalError::Invalid("the output node has no dispersion ratio".into()));
    }
    let values = evaluate_all(model, data, &BTreeMap::new())?;
    let full = model_r2(&values, model.output(), data)?;
    ablated_ratio(model, node, data, &values, full)
}

fn ablated_ratio(
    model: &CompositeModel,
    node: NodeId,
    data: &Dataset,
    values: &BTreeMap<NodeId, PortValue>,
    full: f64,
) -> Result<f64, EvalError> {
    let v = values.get(&node).ok_or_else(|| EvalError::Invalid(format!("node {node} not evaluated")))?;
    let overrides = BTreeMap::from([(node, v.mean_ablated())]);
    let abl = evaluate_all(model, data, &overrides)?;
    Ok(ratio_from(full, model_r2(&abl, model.output(), data)?))
}

/// Non-output reachable nodes whose removal leaves every consumer within its
/// arity.
pub fn prunable_nodes(model: &CompositeModel) -> Vec<NodeId> {
    let reach = model.reachable();
    reach
        .iter()
        .copied()
        .filter(|id| *id != model.output())
        .filter(|id| {
            model.consumers(*id).iter().all(|(c, _)| {
                let node = model.node(*c).expect("consumer exists");
                let left = node.inputs.iter().filter(|p| *p != id).count();
                node.atom.signature().arity.admits(left)
            })
        })
        .collect()
}

/// Drops `id` from its consumers' input lists and garbage-collects.
pub fn prune_node(model: &CompositeModel, id: NodeId) -> CompositeModel {
    let mut out = model.clone();
    for (c, _) in model.consumers(id) {
        out.node_mut(c).expect("consumer exists").inputs.retain(|p| *p != id);
    }
    out.remove_orphans();
    out
}

/// Repeatedly removes the prunable node with the lowest ratio while it is
/// below `tau`, recomputing after every removal. Returns the input unchanged
/// if it cannot be evaluated.
pub fn regularize_dispersion(model: &CompositeModel, data: &Dataset, tau: f64) -> CompositeModel {
    regularize_with(model, data, tau, |m| Some(m.clone()))
}

/// [`regularize_dispersion`] with `refit` applied after each removal. A
/// removal whose refit fails is rolled back and pruning stops.
pub fn regularize_with<F>(model: &CompositeModel, data: &Dataset, tau: f64, mut refit: F) -> CompositeModel
where
    F: FnMut(&CompositeModel) -> Option<CompositeModel>,
{
    let mut current = model.clone();
    loop {
        let Ok(values) = evaluate_all(&current, data, &BTreeMap::new()) else {
            return current;
        };
        let Ok(full) = model_r2(&values, current.output(), data) else {
            return current;
        };
        let mut lowest: Option<(f64, NodeId)> = None;
        for id in prunable_nodes(&current) {
            let Ok(r) = ablated_ratio(&current, id, data, &values, full) else {
                return current;
            };
            if lowest.is_none_or(|(best, _)| r < best) {
                lowest = Some((r, id));
            }
        }
        match lowest {
            Some((r, id)) if r < tau => match refit(&prune_node(&current, id)) {
                Some(next) => current = next,
                None => return current,
            },
            _ => return current,
        }
    }
}
