//! Objective functions. All are minimised.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::graph::CompositeModel;
use crate::io::{std_dev, Dataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),
    #[error("term series are not on the target grid")]
    GridMismatch,
    #[error("every ensemble member failed")]
    AllMembersFailed,
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, ObjectiveError> {
    if pred.len() != truth.len() {
        return Err(ObjectiveError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComplexityMode {
    /// Mutable parametric tokens.
    Tokens,
    /// Additive terms of an equation's left part: inputs of the output sum.
    Terms,
    Nodes,
}

pub fn complexity(model: &CompositeModel, mode: ComplexityMode) -> usize {
    let reach = model.reachable();
    match mode {
        ComplexityMode::Nodes => reach.len(),
        ComplexityMode::Tokens => reach
            .iter()
            .filter_map(|id| model.node(*id))
            .filter(|n| n.atom.mutable && n.atom.kind.is_token())
            .count(),
        ComplexityMode::Terms => model.node(model.output()).map(|n| n.inputs.len()).unwrap_or(0),
    }
}

/// Per-member test errors of a perturbation ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub errors: Vec<f64>,
}

impl EnsembleResult {
    pub fn k(&self) -> usize {
        self.errors.len()
    }
}

/// `μ·sqrt(Σ(fᵢ − μ)²/(k − 1)) + 1` with `μ = mean(f) + 1`.
pub fn robust_objective(ensemble: &EnsembleResult) -> Result<f64, ObjectiveError> {
    let k = ensemble.k();
    if k < 2 {
        return Err(ObjectiveError::EnsembleTooSmall(k));
    }
    let mu = ensemble.errors.iter().sum::<f64>() / k as f64 + 1.0;
    let spread = ensemble.errors.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok(mu * spread.sqrt() + 1.0)
}

/// Refits `model` `k` times on copies of `data` whose training part is
/// perturbed by Gaussian noise of scale `sigma_p·std(train u)`, collecting
/// the test error of each refit. Members whose fit fails get the worst
/// successful member's error.
pub fn build_ensemble<F>(
    model: &CompositeModel,
    data: &Dataset,
    k: usize,
    sigma_p: f64,
    rng: &mut dyn RngCore,
    mut fit_and_score: F,
) -> Result<EnsembleResult, ObjectiveError>
where
    F: FnMut(&CompositeModel, &Dataset) -> Option<f64>,
{
    if k < 2 {
        return Err(ObjectiveError::EnsembleTooSmall(k));
    }
    let scale = sigma_p.max(0.0) * std_dev(&data.u[..data.train_end]);
    let noise = Normal::new(0.0, scale.max(0.0)).expect("finite non-negative scale");
    let mut errors: Vec<Option<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut u = data.u.clone();
        if scale > 0.0 {
            for v in u.iter_mut().take(data.train_end) {
                *v += noise.sample(rng);
            }
        }
        let member = data.with_signal(u);
        errors.push(fit_and_score(model, &member).filter(|e| e.is_finite()));
    }
    let worst = errors.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst == f64::NEG_INFINITY {
        return Err(ObjectiveError::AllMembersFailed);
    }
    Ok(EnsembleResult { errors: errors.into_iter().map(|e| e.unwrap_or(worst)).collect() })
}

/// RMSE between `Σ cᵢ·termᵢ (+ intercept)` and the target over interior
/// points (first and last sample excluded).
pub fn equation_residual(terms: &[Vec<f64>], coefficients: &[f64], intercept: f64, target: &[f64]) -> Result<f64, ObjectiveError> {
    if terms.len() != coefficients.len() || terms.iter().any(|t| t.len() != target.len()) {
        return Err(ObjectiveError::GridMismatch);
    }
    if target.len() < 3 {
        return Err(ObjectiveError::Empty);
    }
    let n = target.len();
    let lhs: Vec<f64> = (1..n - 1)
        .map(|i| intercept + terms.iter().zip(coefficients).map(|(t, c)| c * t[i]).sum::<f64>())
        .collect();
    rmse(&lhs, &target[1..n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomInstance;
    use crate::graph::NodeId;

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        let truth = [1.0, 5.0, 2.0, 8.0];
        let m = truth.iter().sum::<f64>() / 4.0;
        assert!((rmse(&[m; 4], &truth).unwrap() - std_dev(&truth)).abs() < 1e-12);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(ObjectiveError::LengthMismatch(1, 2)));
    }

    #[test]
    fn robust_hand_cases() {
        let v = robust_objective(&EnsembleResult { errors: vec![2.0, 4.0] }).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let c = 1.5;
        let v = robust_objective(&EnsembleResult { errors: vec![c, c] }).unwrap();
        assert!((v - ((c + 1.0) * 2f64.sqrt() + 1.0)).abs() < 1e-12);
        assert_eq!(
            robust_objective(&EnsembleResult { errors: vec![1.0] }),
            Err(ObjectiveError::EnsembleTooSmall(1))
        );
    }

    #[test]
    fn token_counts() {
        let mut m = CompositeModel::new(4, 16);
        let ids: Vec<NodeId> = (0..3).map(|i| m.add_node(AtomInstance::sin(i as f64, 0.0, 1.0), vec![])).collect();
        let s = m.add_node(AtomInstance::sum(), ids);
        m.set_output(s);
        assert_eq!(complexity(&m, ComplexityMode::Tokens), 3);
        assert_eq!(complexity(&m, ComplexityMode::Nodes), 4);
        assert_eq!(complexity(&CompositeModel::single(AtomInstance::poly(1.0, 1.0)), ComplexityMode::Tokens), 1);
    }

    #[test]
    fn zero_equation_has_zero_residual() {
        let z = vec![0.0; 10];
        assert_eq!(equation_residual(std::slice::from_ref(&z), &[0.0], 0.0, &z).unwrap(), 0.0);
        assert_eq!(equation_residual(&[vec![0.0; 3]], &[1.0], 0.0, &z), Err(ObjectiveError::GridMismatch));
    }
}
