use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::{generic_vary, Task, TaskError};
use crate::atoms::regress::{align_and_stack, fit_regressor, predict_regressor, targets_for};
use crate::atoms::{apply_atom, AtomInstance, AtomKind, AtomRegistry};
use crate::evo::regularize_with;
use crate::graph::{random_model, topological_order, validate, CompositeModel, FeatureMatrix, ModelConstraints, NodeId, PortKind, PortValue};
use crate::io::{Config, Dataset, MlConfig, OperatorConfig};
use crate::objectives::{build_ensemble, complexity, rmse, robust_objective, ComplexityMode};

const RANDOM_MODEL_ATTEMPTS: usize = 200;
/// Share of the training rows used for validation when tuning.
const TUNE_VALIDATION: f64 = 0.2;

/// One-step-ahead forecasting with pipelines of regressors over lagged
/// embeddings of the series.
pub struct MlTask {
    registry: AtomRegistry,
    data: Dataset,
    ops: OperatorConfig,
    cfg: MlConfig,
}

pub fn build_ml_task(config: &Config, data: Dataset) -> Result<MlTask, TaskError> {
    let cfg = config.ml.clone();
    if cfg.objectives.len() < 2 {
        return Err(TaskError::Config("forecasting needs at least 2 objectives".into()));
    }
    for o in &cfg.objectives {
        if !["rmse", "robust", "complexity"].contains(&o.as_str()) {
            return Err(TaskError::Config(format!("unknown forecasting objective `{o}`")));
        }
    }
    if cfg.min_window == 0 || cfg.min_window > cfg.max_window {
        return Err(TaskError::Config("need 1 ≤ min_window ≤ max_window".into()));
    }
    if cfg.max_window + 8 > data.train_end {
        return Err(TaskError::Config(format!(
            "max_window {} leaves too few training rows ({} samples)",
            cfg.max_window, data.train_end
        )));
    }
    let (lo, hi) = (cfg.min_window, cfg.max_window);
    let mut registry = AtomRegistry::new();
    for name in &cfg.atoms {
        let kind: AtomKind = name.parse().map_err(TaskError::Config)?;
        match kind {
            AtomKind::Lag => registry.register(kind, true, move |rng| AtomInstance::lag(rng.random_range(lo..=hi)))?,
            AtomKind::Linear => registry.register(kind, true, |_| AtomInstance::new(AtomKind::Linear, vec![]))?,
            AtomKind::Ridge => registry.register(kind, true, |rng| {
                let l: f64 = rng.random_range((1e-4f64).ln()..10f64.ln());
                AtomInstance::new(AtomKind::Ridge, vec![]).with_hyper("lambda", l.exp())
            })?,
            AtomKind::Knn => registry.register(kind, true, |rng| {
                AtomInstance::new(AtomKind::Knn, vec![]).with_hyper("k", rng.random_range(1..=10) as f64)
            })?,
            AtomKind::DecisionTree => registry.register(kind, true, |rng| {
                AtomInstance::new(AtomKind::DecisionTree, vec![])
                    .with_hyper("max_depth", rng.random_range(2..=8) as f64)
                    .with_hyper("min_leaf", rng.random_range(1..=10) as f64)
            })?,
            other => return Err(TaskError::Config(format!("`{other}` is not a forecasting atom"))),
        }
    }
    if !registry.contains(AtomKind::Lag) {
        return Err(TaskError::Config("pipelines need the `lag` atom".into()));
    }
    if !registry.kinds().any(|k| k.is_regressor()) {
        return Err(TaskError::Config("no regressor atoms configured".into()));
    }
    Ok(MlTask { registry, data, ops: config.operators.clone(), cfg })
}

fn tuning_grid(kind: AtomKind) -> Vec<Vec<(&'static str, f64)>> {
    match kind {
        AtomKind::Ridge => [1e-3, 1e-2, 1e-1, 1.0, 10.0].iter().map(|l| vec![("lambda", *l)]).collect(),
        AtomKind::Knn => [1.0, 3.0, 5.0, 7.0, 10.0].iter().map(|k| vec![("k", *k)]).collect(),
        AtomKind::DecisionTree => [3.0, 5.0, 8.0]
            .iter()
            .flat_map(|d| [1.0, 5.0].map(|l| vec![("max_depth", *d), ("min_leaf", l)]))
            .collect(),
        _ => Vec::new(),
    }
}

impl MlTask {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// `regressor(lag(window))`.
    pub fn pipeline(&self, regressor: AtomInstance, window: usize) -> CompositeModel {
        let mut m = CompositeModel::new(self.ops.depth_budget, self.ops.max_nodes);
        let lag = m.add_node(AtomInstance::lag(window), vec![]);
        let r = m.add_node(regressor, vec![lag]);
        m.set_output(r);
        m
    }

    fn tuned(&self, atom: &AtomInstance, x: &FeatureMatrix, y: &[f64]) -> AtomInstance {
        let grid = tuning_grid(atom.kind);
        let split = ((x.rows as f64) * (1.0 - TUNE_VALIDATION)) as usize;
        if grid.is_empty() || split < 2 || split >= x.rows {
            return atom.clone();
        }
        let (xa, xb) = (x.slice_rows(0, split), x.slice_rows(split, x.rows));
        let mut best = (f64::INFINITY, atom.clone());
        for point in grid {
            let mut cand = atom.clone();
            for (k, v) in point {
                cand.hyper.insert(k.to_string(), v);
            }
            let Ok(fitted) = fit_regressor(&cand, &xa, &y[..split]) else { continue };
            let Ok(pred) = predict_regressor(&fitted, &xb) else { continue };
            if let Ok(e) = rmse(&pred, &y[split..]) {
                if e < best.0 {
                    best = (e, cand);
                }
            }
        }
        best.1
    }

    /// Fits every regressor, in topological order, on the rows whose target
    /// lies in the training part of `data`. Returns the fitted model and
    /// its output.
    pub fn fit_on(&self, model: &CompositeModel, data: &Dataset) -> Result<(CompositeModel, FeatureMatrix), TaskError> {
        let report = validate(model);
        if !report.ok() {
            return Err(TaskError::Template(report.to_string()));
        }
        let order = topological_order(model).map_err(|e| TaskError::Template(e.to_string()))?;
        let mut out = model.clone();
        let mut values: BTreeMap<NodeId, PortValue> = BTreeMap::new();
        for id in order {
            let node = out.node(id).expect("ordered node").clone();
            let inputs: Vec<PortValue> = node.inputs.iter().map(|p| values[p].clone()).collect();
            let mut atom = node.atom.clone();
            if atom.kind.is_regressor() {
                let mats: Vec<&FeatureMatrix> = inputs.iter().filter_map(|v| v.as_matrix()).collect();
                let x = align_and_stack(&mats);
                let y = targets_for(&x, &data.u);
                let train_rows = data.train_end.saturating_sub(x.offset).min(x.rows);
                let xt = x.slice_rows(0, train_rows);
                if self.cfg.tune_hyperparams {
                    atom = self.tuned(&atom, &xt, &y[..train_rows]);
                }
                atom = fit_regressor(&atom, &xt, &y[..train_rows])?;
                out.node_mut(id).expect("ordered node").atom = atom.clone();
            }
            let v = apply_atom(&atom, &inputs, data)?;
            if !v.is_finite() {
                return Err(TaskError::Template(format!("node {id} produced non-finite values")));
            }
            values.insert(id, v);
        }
        match values.remove(&out.output()) {
            Some(PortValue::Matrix(m)) => Ok((out, m)),
            _ => Err(TaskError::Template("pipeline output is not a prediction matrix".into())),
        }
    }

    /// RMSE over the rows whose target lies in the test part of `data`.
    pub fn test_rmse(&self, pred: &FeatureMatrix, data: &Dataset) -> Result<f64, TaskError> {
        let start = data.train_end.max(pred.offset);
        let end = pred.offset + pred.rows;
        if start >= end {
            return Err(TaskError::Template("no test rows".into()));
        }
        let p: Vec<f64> = (start..end).map(|g| pred.get(g - pred.offset, 0)).collect();
        Ok(rmse(&p, &data.u[start..end])?)
    }

    pub fn robustness(&self, model: &CompositeModel, rng: &mut dyn RngCore) -> Result<f64, TaskError> {
        let ens = build_ensemble(model, &self.data, self.cfg.ensemble_k, self.cfg.sigma_p, rng, |m, d| {
            let (_, pred) = self.fit_on(m, d).ok()?;
            self.test_rmse(&pred, d).ok()
        })?;
        Ok(robust_objective(&ens)?)
    }
}

impl Task for MlTask {
    fn name(&self) -> &str {
        "ml"
    }

    fn objective_names(&self) -> Vec<String> {
        self.cfg.objectives.clone()
    }

    fn registry(&self) -> &AtomRegistry {
        &self.registry
    }

    fn random_model(&self, rng: &mut dyn RngCore) -> Result<CompositeModel, TaskError> {
        let constraints = ModelConstraints {
            depth_budget: self.ops.depth_budget,
            max_nodes: self.ops.max_nodes,
            required_output: PortKind::FeatureMatrix,
        };
        for _ in 0..RANDOM_MODEL_ATTEMPTS {
            let m = random_model(&self.registry, &constraints, rng)?;
            if self.conforms(&m) {
                return Ok(m);
            }
        }
        Err(TaskError::Config("could not draw a pipeline ending in a regressor".into()))
    }

    fn conforms(&self, model: &CompositeModel) -> bool {
        if !validate(model).ok() || model.len() != model.reachable().len() {
            return false;
        }
        let out_is_regressor = model.node(model.output()).is_some_and(|n| n.atom.kind.is_regressor());
        out_is_regressor
            && model.nodes().all(|(_, n)| {
                if n.inputs.is_empty() {
                    n.atom.kind == AtomKind::Lag
                } else {
                    n.atom.kind.is_regressor()
                }
            })
    }

    fn vary(&self, a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel) {
        generic_vary(a, b, &self.registry, &self.ops, rng)
    }

    fn evaluate(&self, model: &CompositeModel, rng: &mut dyn RngCore) -> Result<(CompositeModel, Vec<f64>), TaskError> {
        if !self.conforms(model) {
            return Err(TaskError::Template("pipeline must end in a regressor over lag leaves".into()));
        }
        let (fitted, _) = self.fit_on(model, &self.data)?;
        let train = self.data.train();
        let pruned = regularize_with(&fitted, &train, self.ops.tau, |m| self.fit_on(m, &self.data).ok().map(|r| r.0));
        let (fitted, pred) = self.fit_on(&pruned, &self.data)?;
        let mut f = Vec::with_capacity(self.cfg.objectives.len());
        for o in &self.cfg.objectives {
            f.push(match o.as_str() {
                "rmse" => self.test_rmse(&pred, &self.data)?,
                "robust" => self.robustness(&fitted, rng)?,
                _ => complexity(&fitted, ComplexityMode::Nodes) as f64,
            });
        }
        Ok((fitted, f))
    }

    fn render(&self, model: &CompositeModel) -> String {
        render_pipeline(model)
    }
}

/// Nested-call text such as `ridge(lambda=0.1000, lag(24))`.
pub fn render_pipeline(model: &CompositeModel) -> String {
    fn node_text(m: &CompositeModel, id: NodeId) -> String {
        let n = m.node(id).expect("rendered node");
        let mut inner: Vec<String> = if n.atom.kind == AtomKind::Lag {
            vec![format!("{}", n.atom.hyper_or("window", 0.0) as usize)]
        } else {
            n.atom.hyper.iter().map(|(k, v)| format!("{k}={}", super::fmt_sig4(*v))).collect()
        };
        inner.extend(n.inputs.iter().map(|c| node_text(m, *c)));
        format!("{}({})", n.atom.kind, inner.join(", "))
    }
    node_text(model, model.output())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{default_components, synth_multiscale};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(n: usize) -> MlTask {
        let data = synth_multiscale(0, &default_components(), 0.05, n, 1.0).unwrap();
        build_ml_task(&Config::default(), data).unwrap()
    }

    #[test]
    fn default_registry_has_five_kinds() {
        let t = task(256);
        assert_eq!(t.registry().len(), 5);
        assert_eq!(t.objective_names().len(), 2);
    }

    #[test]
    fn random_pipelines_start_with_lag() {
        let t = task(256);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let m = t.random_model(&mut rng).unwrap();
            assert!(t.conforms(&m));
            assert!(m.nodes().any(|(_, n)| n.atom.kind == AtomKind::Lag));
        }
    }

    #[test]
    fn ridge_pipeline_forecasts_well() {
        let t = task(512);
        let ridge = AtomInstance::new(AtomKind::Ridge, vec![]).with_hyper("lambda", 1e-3);
        let m = t.pipeline(ridge, 24);
        let (_, f) = t.evaluate(&m, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(f[0] < 0.2, "{f:?}");
        assert!(f[1] >= 1.0);
    }

    #[test]
    fn render_is_nested_call() {
        let t = task(256);
        let m = t.pipeline(AtomInstance::new(AtomKind::Knn, vec![]).with_hyper("k", 3.0), 4);
        assert_eq!(t.render(&m), "knn(k=3.000, lag(4))");
    }
}
