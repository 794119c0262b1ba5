use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{Task, TaskError};
use crate::atoms::{AtomInstance, AtomKind, AtomRegistry};
use crate::graph::CompositeModel;

const LOW: f64 = -1.0;
const HIGH: f64 = 3.0;

/// Scalar genome `x` scored by `(x², (x − 2)²)`. The Pareto set is `[0, 2]`.
pub struct ToyTask {
    registry: AtomRegistry,
    /// Chance of redrawing `x` uniformly instead of a Gaussian step.
    pub p_reset: f64,
    pub step: f64,
}

impl Default for ToyTask {
    fn default() -> Self {
        let mut registry = AtomRegistry::new();
        registry
            .register(AtomKind::Const, true, |rng| AtomInstance::constant(rng.random_range(LOW..HIGH)))
            .expect("fresh registry");
        ToyTask { registry, p_reset: 0.1, step: 0.1 }
    }
}

impl ToyTask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(model: &CompositeModel) -> Option<f64> {
        let node = model.node(model.output())?;
        (node.atom.kind == AtomKind::Const).then(|| node.atom.params.first().copied()).flatten()
    }

    fn with_value(x: f64) -> CompositeModel {
        CompositeModel::single(AtomInstance::constant(x))
    }
}

impl Task for ToyTask {
    fn name(&self) -> &str {
        "toy"
    }

    fn objective_names(&self) -> Vec<String> {
        vec!["x^2".into(), "(x-2)^2".into()]
    }

    fn registry(&self) -> &AtomRegistry {
        &self.registry
    }

    fn random_model(&self, rng: &mut dyn RngCore) -> Result<CompositeModel, TaskError> {
        Ok(CompositeModel::single(self.registry.fresh(AtomKind::Const, rng)?))
    }

    fn conforms(&self, model: &CompositeModel) -> bool {
        model.len() == 1 && Self::value(model).is_some_and(f64::is_finite)
    }

    /// Blend crossover, then a Gaussian step or an occasional uniform redraw.
    fn vary(&self, a: &CompositeModel, b: &CompositeModel, rng: &mut dyn RngCore) -> (CompositeModel, CompositeModel) {
        let (xa, xb) = (Self::value(a).unwrap_or(0.0), Self::value(b).unwrap_or(0.0));
        let w: f64 = rng.random_range(-0.25..1.25);
        let children = [xa + w * (xb - xa), xb + w * (xa - xb)];
        let normal = Normal::new(0.0, self.step).expect("positive step");
        let [ca, cb] = children.map(|x| {
            let x = if rng.random_bool(self.p_reset) {
                rng.random_range(LOW..HIGH)
            } else {
                x + normal.sample(rng)
            };
            Self::with_value(x.clamp(LOW, HIGH))
        });
        (ca, cb)
    }

    fn evaluate(&self, model: &CompositeModel, _rng: &mut dyn RngCore) -> Result<(CompositeModel, Vec<f64>), TaskError> {
        let x = Self::value(model).ok_or_else(|| TaskError::Template("expected a single constant".into()))?;
        Ok((model.clone(), vec![x * x, (x - 2.0) * (x - 2.0)]))
    }

    fn render(&self, model: &CompositeModel) -> String {
        match Self::value(model) {
            Some(x) => format!("x = {}", super::fmt_sig4(x)),
            None => "x = ?".into(),
        }
    }
}
