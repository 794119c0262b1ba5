use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

use super::{generic_vary, render_expression, Task, TaskError};
use crate::atoms::tokens::{check_params, fit_token_modulated, token_value};
use crate::atoms::{AtomInstance, AtomKind, AtomRegistry};
use crate::evo::regularize_with;
use crate::graph::{evaluate, CompositeModel, NodeId};
use crate::io::{Config, Dataset, OperatorConfig};
use crate::objectives::{complexity, rmse, ComplexityMode};

/// Backfitting passes over all tokens.
const SWEEPS: usize = 3;

/// Closed-form expressions as a sum of products of tokens. The sum and the
/// products are immutable scaffolding; only the tokens vary.
pub struct ExprTask {
    registry: AtomRegistry,
    tokens: Vec<AtomKind>,
    data: Dataset,
    ops: OperatorConfig,
    objectives: Vec<String>,
    pub max_terms: usize,
    pub max_factors: usize,
}

pub fn build_expr_task(config: &Config, data: Dataset) -> Result<ExprTask, TaskError> {
    let cfg = &config.expr;
    if cfg.objectives.len() < 2 {
        return Err(TaskError::Config("expression discovery needs at least 2 objectives".into()));
    }
    for o in &cfg.objectives {
        if o != "rmse" && o != "complexity" {
            return Err(TaskError::Config(format!("unknown expression objective `{o}`")));
        }
    }
    if cfg.max_terms == 0 || cfg.max_factors == 0 {
        return Err(TaskError::Config("max_terms and max_factors must be ≥ 1".into()));
    }
    let nodes_needed = 1 + cfg.max_terms * (1 + cfg.max_factors);
    if nodes_needed > config.operators.max_nodes {
        return Err(TaskError::Config(format!(
            "max_terms/max_factors need {nodes_needed} nodes, max_nodes is {}",
            config.operators.max_nodes
        )));
    }
    if config.operators.depth_budget < 2 {
        return Err(TaskError::Config("expression templates need depth_budget ≥ 2".into()));
    }
    data.require_len(16)?;
    let span = data.t[data.len() - 1] - data.t[0];
    let (t0, dt) = (data.t[0], data.dt);
    let mut registry = AtomRegistry::new();
    let mut tokens = Vec::new();
    for name in &cfg.atoms {
        let kind: AtomKind = name.parse().map_err(TaskError::Config)?;
        match kind {
            AtomKind::Sin => registry.register(kind, true, move |rng| {
                // log-uniform between one cycle per span and Nyquist
                let lo = (2.0 * PI / span).ln();
                let hi = (PI / dt).ln();
                AtomInstance::sin(rng.random_range(lo..hi).exp(), 0.0, 1.0)
            })?,
            AtomKind::Poly => registry.register(kind, true, |rng| AtomInstance::poly(rng.random_range(0..=6) as f64 * 0.5, 1.0))?,
            AtomKind::Pulse => registry.register(kind, true, move |rng| {
                AtomInstance::pulse(t0 + rng.random_range(0.0..1.0) * span, span / 8.0, 1.0)
            })?,
            other => return Err(TaskError::Config(format!("`{other}` is not a token kind"))),
        }
        tokens.push(kind);
    }
    if tokens.is_empty() {
        return Err(TaskError::Config("no token kinds configured".into()));
    }
    registry.register(AtomKind::Sum, false, |_| AtomInstance::sum())?;
    registry.register(AtomKind::Product, false, |_| AtomInstance::product())?;
    Ok(ExprTask {
        registry,
        tokens,
        data,
        ops: config.operators.clone(),
        objectives: cfg.objectives.clone(),
        max_terms: cfg.max_terms,
        max_factors: cfg.max_factors,
    })
}

/// `(product, factors)` for every term under the output sum.
fn terms_of(model: &CompositeModel) -> Vec<(NodeId, Vec<NodeId>)> {
    let root = model.node(model.output()).expect("output exists");
    root.inputs
        .iter()
        .map(|p| (*p, model.node(*p).map(|n| n.inputs.clone()).unwrap_or_default()))
        .collect()
}

fn product_of(series: &[&Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![1.0; len];
    for s in series {
        for (o, v) in out.iter_mut().zip(s.iter()) {
            *o *= v;
        }
    }
    out
}

impl ExprTask {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn fresh_token(&self, rng: &mut dyn RngCore) -> AtomInstance {
        let kind = *self.tokens.choose(rng).expect("non-empty token set");
        self.registry.fresh(kind, rng).expect("registered token")
    }

    /// Builds a template model from token lists, one list per product.
    pub fn template(&self, terms: Vec<Vec<AtomInstance>>) -> CompositeModel {
        let mut m = CompositeModel::new(self.ops.depth_budget, self.ops.max_nodes);
        let mut products = Vec::new();
        for factors in terms {
            let ids: Vec<NodeId> = factors.into_iter().map(|a| m.add_node(a, vec![])).collect();
            products.push(m.add_node(AtomInstance::product(), ids));
        }
        let root = m.add_node(AtomInstance::sum(), products);
        m.set_output(root);
        m
    }

    /// Adds a one-token product or a factor to an existing product.
    fn grow(&self, model: &CompositeModel, rng: &mut dyn RngCore) -> CompositeModel {
        let terms = terms_of(model);
        let room = self.ops.max_nodes.saturating_sub(model.len());
        let can_term = terms.len() < self.max_terms && room >= 2;
        let open: Vec<NodeId> = terms
            .iter()
            .filter(|(_, f)| f.len() < self.max_factors)
            .map(|(p, _)| *p)
            .collect();
        let can_factor = !open.is_empty() && room >= 1;
        let mut out = model.clone();
        let add_term = match (can_term, can_factor) {
            (false, false) => return out,
            (true, false) => true,
            (false, true) => false,
            (true, true) => rng.random_bool(0.5),
        };
        let token = self.fresh_token(rng);
        let leaf = out.add_node(token, vec![]);
        if add_term {
            let p = out.add_node(AtomInstance::product(), vec![leaf]);
            let root = out.output();
            out.node_mut(root).expect("output exists").inputs.push(p);
        } else {
            let p = *open.choose(rng).expect("open product");
            out.node_mut(p).expect("product exists").inputs.push(leaf);
        }
        out
    }

    /// Backfits every token on the training part, each against the residual
    /// of the other terms and modulated by its sibling factors.
    pub fn fit(&self, model: &CompositeModel) -> Result<CompositeModel, TaskError> {
        if !self.conforms(model) {
            return Err(TaskError::Template("not a sum of token products".into()));
        }
        let n = self.data.train_end;
        let (t, y) = (&self.data.t[..n], &self.data.u[..n]);
        let mut out = model.clone();
        let terms = terms_of(model);
        let mut values: Vec<Vec<Vec<f64>>> = terms.iter().map(|(_, f)| vec![vec![1.0; n]; f.len()]).collect();
        let mut term_series: Vec<Vec<f64>> = vec![vec![0.0; n]; terms.len()];
        for _ in 0..SWEEPS {
            for (j, (_, factors)) in terms.iter().enumerate() {
                let mut residual = y.to_vec();
                for (i, s) in term_series.iter().enumerate() {
                    if i != j {
                        for (r, v) in residual.iter_mut().zip(s) {
                            *r -= v;
                        }
                    }
                }
                for (f, id) in factors.iter().enumerate() {
                    let siblings: Vec<&Vec<f64>> = values[j].iter().enumerate().filter(|(g, _)| *g != f).map(|(_, v)| v).collect();
                    let modulation = (!siblings.is_empty()).then(|| product_of(&siblings, n));
                    let atom = &out.node(*id).expect("factor exists").atom;
                    let fit = fit_token_modulated(atom, t, &residual, modulation.as_deref())?;
                    values[j][f] = t.iter().map(|&x| token_value(&fit.atom, x)).collect();
                    out.node_mut(*id).expect("factor exists").atom = fit.atom;
                }
                let all: Vec<&Vec<f64>> = values[j].iter().collect();
                term_series[j] = product_of(&all, n);
            }
        }
        Ok(out)
    }

    /// Fit, then dispersion pruning with a refit after each removal.
    pub fn fit_and_regularize(&self, model: &CompositeModel) -> Result<CompositeModel, TaskError> {
        let fitted = self.fit(model)?;
        let train = self.data.train();
        Ok(regularize_with(&fitted, &train, self.ops.tau, |m| self.fit(m).ok()))
    }

    /// Objective values of an already fitted model.
    pub fn score(&self, model: &CompositeModel) -> Result<Vec<f64>, TaskError> {
        let out = evaluate(model, &self.data)?;
        let pred = out.as_series().ok_or_else(|| TaskError::Template("output is not a series".into()))?;
        let test = self.data.train_end..self.data.len();
        let err = rmse(&pred[test.clone()], &self.data.u[test])?;
        let c = complexity(model, ComplexityMode::Tokens) as f64;
        Ok(self
            .objectives
            .iter()
            .map(|o| if o == "rmse" { err } else { c })
            .collect())
    }
}

impl Task for ExprTask {
    fn name(&self) -> &str {
        "expr"
    }

    fn objective_names(&self) -> Vec<String> {
        self.objectives.clone()
    }

    fn registry(&self) -> &AtomRegistry {
        &self.registry
    }

    fn random_model(&self, rng: &mut dyn RngCore) -> Result<CompositeModel, TaskError> {
        let terms = rng.random_range(1..=self.max_terms);
        let spec = (0..terms)
            .map(|_| {
                let factors = rng.random_range(1..=self.max_factors);
                (0..factors).map(|_| self.fresh_token(rng)).collect()
            })
            .collect();
        Ok(self.template(spec))
    }

    fn conforms(&self, model: &CompositeModel) -> bool {
        let Some(root) = model.node(model.output()) else {
            return false;
        };
        if root.atom.kind != AtomKind::Sum || root.atom.mutable {
            return false;
        }
        if root.inputs.is_empty() || root.inputs.len() > self.max_terms || model.len() != model.reachable().len() {
            return false;
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &root.inputs {
            let Some(prod) = model.node(*p) else { return false };
            if prod.atom.kind != AtomKind::Product || prod.atom.mutable {
                return false;
            }
            if prod.inputs.is_empty() || prod.inputs.len() > self.max_factors || !seen.insert(*p) {
                return false;
            }
            for f in &prod.inputs {
                let Some(tok) = model.node(*f) else { return false };
                if !tok.atom.kind.is_token() || !tok.atom.mutable || !tok.inputs.is_empty() || !seen.insert(*f) {
                    return false;
                }
            }
        }
        true
    }

    fn vary(&self, a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel) {
        let (ca, cb) = generic_vary(a, b, &self.registry, &self.ops, rng);
        let mut grow = |m: CompositeModel| {
            if rng.random_bool(self.ops.p_tree.clamp(0.0, 1.0)) {
                self.grow(&m, rng)
            } else {
                m
            }
        };
        let ca = grow(ca);
        let cb = grow(cb);
        (ca, cb)
    }

    fn evaluate(&self, model: &CompositeModel, _rng: &mut dyn RngCore) -> Result<(CompositeModel, Vec<f64>), TaskError> {
        let fitted = self.fit_and_regularize(model)?;
        for (_, n) in fitted.nodes() {
            check_params(&n.atom)?;
        }
        let f = self.score(&fitted)?;
        Ok((fitted, f))
    }

    fn render(&self, model: &CompositeModel) -> String {
        render_expression(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::mutate_node;
    use crate::io::{synth_multiscale, Component};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task() -> ExprTask {
        let data = synth_multiscale(0, &[Component::new(1.0, 1.0 / 24.0, 0.0), Component::new(0.5, 1.0 / 12.42, 1.0)], 0.0, 512, 1.0)
            .unwrap();
        build_expr_task(&Config::default(), data).unwrap()
    }

    #[test]
    fn random_models_follow_template() {
        let task = task();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = task.random_model(&mut rng).unwrap();
            assert!(task.conforms(&m));
            let root = m.node(m.output()).unwrap();
            assert_eq!(root.atom.kind, AtomKind::Sum);
            assert!(!root.atom.mutable);
        }
    }

    #[test]
    fn mutation_keeps_scaffolding() {
        let task = task();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = task.random_model(&mut rng).unwrap();
        for _ in 0..1000 {
            m = mutate_node(&m, &task.registry, &mut rng, 0.5).0;
            assert!(task.conforms(&m));
        }
    }

    #[test]
    fn two_sines_are_recovered() {
        let task = task();
        let m = task.template(vec![vec![AtomInstance::sin(0.1, 0.0, 1.0)], vec![AtomInstance::sin(0.2, 0.0, 1.0)]]);
        let (fitted, f) = task.evaluate(&m, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(f[1], 2.0, "{}", task.render(&fitted));
        assert!(f[0] < 0.05 * task.data.std(), "{f:?} {}", task.render(&fitted));
    }

    #[test]
    fn growth_respects_limits() {
        let task = task();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = task.random_model(&mut rng).unwrap();
        for _ in 0..50 {
            m = task.grow(&m, &mut rng);
            assert!(task.conforms(&m));
        }
        assert_eq!(complexity(&m, ComplexityMode::Tokens), task.max_terms * task.max_factors);
    }
}
